//! The policy/value network: body tokenization, patch embedding, a two-layer
//! pre-norm encoder with consistent feature/PE dropout, linear action decode,
//! plus the baseline and ablation variants behind one interface.

mod net;
mod params;
mod policy;

pub use policy::{Phase, Policy, StepOutput};

use crate::error::{Result, RoltError};
use crate::tensor::BitMask;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Rolt,
    Mlp,
    RollDrop,
    ModulePe,
    NoPeDrop,
    NoFeatureDrop,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "rolt" => Ok(Variant::Rolt),
            "mlp" => Ok(Variant::Mlp),
            "roll_drop" => Ok(Variant::RollDrop),
            "module_pe" => Ok(Variant::ModulePe),
            "no_pe_drop" => Ok(Variant::NoPeDrop),
            "no_feature_drop" => Ok(Variant::NoFeatureDrop),
            other => Err(RoltError::Config(format!(
                "unknown variant '{other}' (expected rolt, mlp, roll_drop, module_pe, no_pe_drop, no_feature_drop)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Rolt => "rolt",
            Variant::Mlp => "mlp",
            Variant::RollDrop => "roll_drop",
            Variant::ModulePe => "module_pe",
            Variant::NoPeDrop => "no_pe_drop",
            Variant::NoFeatureDrop => "no_feature_drop",
        }
    }

    /// Token-based variants share the transformer body; the other two are
    /// flat MLPs.
    pub fn is_transformer(&self) -> bool {
        !matches!(self, Variant::Mlp | Variant::RollDrop)
    }

    /// Whether train-mode forwards apply the record's feature masks.
    pub fn feature_dropout_enabled(&self) -> bool {
        matches!(self, Variant::Rolt | Variant::ModulePe | Variant::NoPeDrop)
    }

    /// Whether train-mode forwards replace dropped patch PEs.
    pub fn pe_dropout_enabled(&self) -> bool {
        matches!(self, Variant::Rolt | Variant::ModulePe | Variant::NoFeatureDrop)
    }

    /// Whether the rollout forward privately samples masks that are *not*
    /// stored (the Roll-Drop baseline's failure mode).
    pub fn rollout_only_dropout(&self) -> bool {
        matches!(self, Variant::RollDrop)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Leg count L.
    pub legs: usize,
    /// Joints per leg J.
    pub joints_per_leg: usize,
    /// Hidden dimension D.
    pub hidden_dim: usize,
    /// Encoder depth.
    pub layers: usize,
    /// Attention head count; must divide D.
    pub heads: usize,
    /// Feed-forward width.
    pub ffn_dim: usize,
    /// Patch grid (N_h, N_w); P = N_h·N_w patches.
    pub patch_rows: usize,
    pub patch_cols: usize,
    /// Elevation map dimensions the network is built for.
    pub map_rows: usize,
    pub map_cols: usize,
    /// Observation history steps per leg.
    pub history: usize,
    /// Feature dropout rate.
    pub p_feat: f64,
    /// PE dropout rate.
    pub p_pe: f64,
    /// Rollout-only dropout rate for the roll_drop baseline.
    pub roll_drop_rate: f64,
    /// Hidden widths of the MLP baseline trunk.
    pub mlp_hidden: (usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Rolt,
            legs: 4,
            joints_per_leg: 2,
            hidden_dim: 160,
            layers: 2,
            heads: 4,
            ffn_dim: 320,
            patch_rows: 3,
            patch_cols: 4,
            map_rows: 12,
            map_cols: 16,
            history: 10,
            p_feat: 0.1,
            p_pe: 0.75,
            roll_drop_rate: 1e-4,
            mlp_hidden: (256, 128),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.legs == 0 || self.joints_per_leg == 0 || self.hidden_dim == 0 {
            return Err(RoltError::Config("legs, joints_per_leg, hidden_dim must be positive".into()));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(RoltError::Config(format!(
                "hidden_dim {} not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if self.history < 1 {
            return Err(RoltError::Config("history must be >= 1".into()));
        }
        for (name, r) in [("p_feat", self.p_feat), ("p_pe", self.p_pe), ("roll_drop_rate", self.roll_drop_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(RoltError::Config(format!("{name}={r} outside [0,1)")));
            }
        }
        if self.map_rows % self.patch_rows != 0 || self.map_cols % self.patch_cols != 0 {
            return Err(RoltError::Config(format!(
                "map {}x{} not divisible by patch grid {}x{}",
                self.map_rows, self.map_cols, self.patch_rows, self.patch_cols
            )));
        }
        Ok(())
    }

    /// Patch count P.
    pub fn patches(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    /// Flattened length of one patch.
    pub fn patch_len(&self) -> usize {
        (self.map_rows / self.patch_rows) * (self.map_cols / self.patch_cols)
    }

    /// Token count T. Row layout is [legs 0..L-1, action token, patches];
    /// module_pe drops the action token.
    pub fn tokens(&self) -> usize {
        if self.variant == Variant::ModulePe {
            self.legs + self.patches()
        } else {
            self.legs + 1 + self.patches()
        }
    }

    /// Row index of the first patch token.
    pub fn patch_row_offset(&self) -> usize {
        self.tokens() - self.patches()
    }

    /// Per-leg tokenizer input: history block plus command plus IMU.
    pub fn leg_input_len(&self) -> usize {
        self.history * 3 * self.joints_per_leg + 1 + 5
    }

    pub fn action_dim(&self) -> usize {
        self.legs * self.joints_per_leg
    }

    /// Flat input width of the MLP baselines.
    pub fn mlp_input_len(&self) -> usize {
        self.legs * self.history * 3 * self.joints_per_leg
            + 5
            + 1
            + self.action_dim()
            + self.map_rows * self.map_cols
    }

    /// Sizes of the feature-dropout sites in forward order.
    pub fn feature_sites(&self) -> Vec<usize> {
        if self.variant.is_transformer() {
            let td = self.tokens() * self.hidden_dim;
            (0..2 * self.layers).map(|_| td).collect()
        } else {
            vec![self.mlp_hidden.0, self.mlp_hidden.1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskMode {
    Train,
    Eval,
}

/// Every dropout decision made during one rollout forward, packed as bits.
/// Replaying a forward under the same record (and parameters) reproduces the
/// original output bitwise; that is the consistent-dropout contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutMaskRecord {
    pub mode: MaskMode,
    /// Per-site keep masks in forward order (post-attention then post-FFN per
    /// layer for the transformer; per hidden layer for the MLP).
    pub feat: Vec<BitMask>,
    /// Patch PE keep mask, P bits. Empty for MLP variants.
    pub pe_keep: BitMask,
}

impl DropoutMaskRecord {
    pub fn eval() -> Self {
        DropoutMaskRecord { mode: MaskMode::Eval, feat: Vec::new(), pe_keep: BitMask::zeros(0) }
    }

    /// Sample a train-mode record for this config. Mask sites whose mechanism
    /// is disabled by the variant are stored as all-ones.
    pub fn sample_train<R: rand::Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let feat = cfg
            .feature_sites()
            .into_iter()
            .map(|n| {
                if cfg.variant.feature_dropout_enabled() {
                    BitMask::bernoulli(n, 1.0 - cfg.p_feat, rng)
                } else {
                    BitMask::ones(n)
                }
            })
            .collect();
        let pe_keep = if cfg.variant.is_transformer() {
            if cfg.variant.pe_dropout_enabled() {
                BitMask::bernoulli(cfg.patches(), 1.0 - cfg.p_pe, rng)
            } else {
                BitMask::ones(cfg.patches())
            }
        } else {
            BitMask::zeros(0)
        };
        DropoutMaskRecord { mode: MaskMode::Train, feat, pe_keep }
    }

    /// Check this record against a config; a mismatch here means a record is
    /// being replayed through the wrong network.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.mode == MaskMode::Eval {
            return Ok(());
        }
        let sites = cfg.feature_sites();
        if self.feat.len() != sites.len() {
            return Err(RoltError::Consistency(format!(
                "mask record has {} feature sites, config expects {}",
                self.feat.len(),
                sites.len()
            )));
        }
        for (i, (m, n)) in self.feat.iter().zip(sites.iter()).enumerate() {
            if m.len() != *n {
                return Err(RoltError::Consistency(format!(
                    "feature mask {i} has {} bits, config expects {n}",
                    m.len()
                )));
            }
        }
        let want_pe = if cfg.variant.is_transformer() { cfg.patches() } else { 0 };
        if self.pe_keep.len() != want_pe {
            return Err(RoltError::Consistency(format!(
                "PE keep mask has {} bits, config expects {want_pe}",
                self.pe_keep.len()
            )));
        }
        Ok(())
    }
}

/// Full forward output, attention included.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    /// Action mean μ, length L·J (row-major over legs).
    pub action_mean: Vec<f64>,
    pub value: f64,
    /// attention[layer][head] is a T×T row-major matrix. Empty for MLP
    /// variants.
    pub attention: Vec<Vec<Vec<f64>>>,
}
