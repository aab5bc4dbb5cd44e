//! The variant-agnostic policy interface: sampling steps for rollouts,
//! replaying stored mask records for PPO updates, and full-output forwards
//! for analysis.

use super::net::{self, MlpOut, TransformerOut};
use super::params::{build_params, NetIds, ParamIds};
use super::{DropoutMaskRecord, ModelConfig, PolicyOutput};
use crate::error::{Result, RoltError};
use crate::obs::{ElevationMap, ProprioObs};
use crate::tape::{Tape, Var};
use crate::tensor::BitMask;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Shared by the tape and plain-f64 log-density paths so the two agree
/// bitwise.
fn gauss_norm_const(n: usize) -> f64 {
    -0.5 * n as f64 * LN_2PI
}

fn entropy_const(n: usize) -> f64 {
    0.5 * n as f64 * (1.0 + LN_2PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    TrainRollout,
    Eval,
}

/// Output of one policy step during rollout or evaluation.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub action: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub record: DropoutMaskRecord,
    /// Populated only when attention capture was requested.
    pub attention: Vec<Vec<Vec<f64>>>,
}

/// Tape handles produced by a replay forward, ready for loss assembly.
pub struct ReplayVars {
    pub log_prob: Var,
    pub value: Var,
    pub entropy: Var,
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub cfg: ModelConfig,
    pub params: crate::tape::ParamStore,
    ids: ParamIds,
}

impl Policy {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (params, ids) = build_params(&cfg, seed);
        Ok(Policy { cfg, params, ids })
    }

    pub fn param_count(&self) -> usize {
        self.params.total_elems()
    }

    pub fn log_std_id(&self) -> crate::tape::ParamId {
        self.ids.log_std
    }

    /// Core forward on a caller-provided tape. Returns (μ, value, attention
    /// vars). `rollout_masks` carries the roll_drop baseline's private masks.
    fn forward_on<'t>(
        &self,
        tape: &mut Tape<'t>,
        obs: &ProprioObs,
        map: &ElevationMap,
        record: &DropoutMaskRecord,
        rollout_masks: Option<&[BitMask; 2]>,
    ) -> (Var, Var, Vec<Vec<Var>>) {
        match &self.ids.net {
            NetIds::Transformer(t) => {
                let TransformerOut { mu, value, attention, .. } =
                    net::transformer_forward(tape, &self.cfg, t, obs, map, record);
                (mu, value, attention)
            }
            NetIds::Mlp(m) => {
                let MlpOut { mu, value } =
                    net::mlp_forward(tape, &self.cfg, m, obs, map, rollout_masks);
                (mu, value, Vec::new())
            }
        }
    }

    /// Forward under a given record, returning plain values. Same interface
    /// for every variant, so trainer and harness stay variant-agnostic.
    pub fn forward(
        &self,
        obs: &ProprioObs,
        map: &ElevationMap,
        record: &DropoutMaskRecord,
        capture_attention: bool,
    ) -> PolicyOutput {
        let mut tape = Tape::new(&self.params);
        let (mu, value, attn) = self.forward_on(&mut tape, obs, map, record, None);
        let attention = if capture_attention {
            attn.iter()
                .map(|layer| layer.iter().map(|&w| tape.data(w).to_vec()).collect())
                .collect()
        } else {
            Vec::new()
        };
        PolicyOutput {
            action_mean: tape.data(mu).to_vec(),
            value: tape.data(value)[0],
            attention,
        }
    }

    /// Deterministic eval-mode forward (identity masks, all PEs).
    pub fn eval_forward(&self, obs: &ProprioObs, map: &ElevationMap) -> PolicyOutput {
        self.forward(obs, map, &DropoutMaskRecord::eval(), false)
    }

    fn sample_rollout_masks<R: Rng>(&self, rng: &mut R) -> [BitMask; 2] {
        let (h1, h2) = self.cfg.mlp_hidden;
        let keep = 1.0 - self.cfg.roll_drop_rate;
        [BitMask::bernoulli(h1, keep, rng), BitMask::bernoulli(h2, keep, rng)]
    }

    /// One policy step: sample dropout masks per the phase, run the forward,
    /// sample an action from the diagonal Gaussian, and return everything the
    /// trainer needs to replay this step later.
    pub fn policy_step<R: Rng>(
        &self,
        obs: &ProprioObs,
        map: &ElevationMap,
        phase: Phase,
        rng: &mut R,
        capture_attention: bool,
    ) -> StepOutput {
        let (record, rollout_masks) = match phase {
            Phase::Eval => (DropoutMaskRecord::eval(), None),
            Phase::TrainRollout => {
                if self.cfg.variant.rollout_only_dropout() {
                    // Masks are used now and deliberately not stored: the
                    // update phase replays with identity masks, which is the
                    // inconsistency this baseline demonstrates.
                    let masks = self.sample_rollout_masks(rng);
                    (DropoutMaskRecord::eval(), Some(masks))
                } else {
                    (DropoutMaskRecord::sample_train(&self.cfg, rng), None)
                }
            }
        };

        let mut tape = Tape::new(&self.params);
        let (mu_var, value_var, attn) =
            self.forward_on(&mut tape, obs, map, &record, rollout_masks.as_ref());
        let mu = tape.data(mu_var).to_vec();
        let value = tape.data(value_var)[0];
        let attention = if capture_attention {
            attn.iter()
                .map(|layer| layer.iter().map(|&w| tape.data(w).to_vec()).collect())
                .collect()
        } else {
            Vec::new()
        };

        let log_std = &self.params.value(self.ids.log_std).data;
        let action: Vec<f64> = mu
            .iter()
            .zip(log_std.iter())
            .map(|(&m, &s)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + s.exp() * eps
            })
            .collect();
        let log_prob = gaussian_log_prob(&action, &mu, log_std);

        StepOutput { action, action_mean: mu, log_prob, value, record, attention }
    }

    /// Recompute (log_prob, value, entropy) for a stored transition under its
    /// recorded masks, as plain values. With unchanged parameters this equals
    /// the rollout log-prob bitwise.
    pub fn logprob_under_record(
        &self,
        obs: &ProprioObs,
        map: &ElevationMap,
        action: &[f64],
        record: &DropoutMaskRecord,
    ) -> Result<(f64, f64, f64)> {
        let mut tape = Tape::new(&self.params);
        let vars = self.replay_on(&mut tape, obs, map, action, record)?;
        Ok((
            tape.data(vars.log_prob)[0],
            tape.data(vars.value)[0],
            tape.data(vars.entropy)[0],
        ))
    }

    /// Same as [`Self::logprob_under_record`] but leaves the graph on the tape
    /// so the PPO loss can be assembled and differentiated.
    pub fn replay_on<'t>(
        &self,
        tape: &mut Tape<'t>,
        obs: &ProprioObs,
        map: &ElevationMap,
        action: &[f64],
        record: &DropoutMaskRecord,
    ) -> Result<ReplayVars> {
        record.check(&self.cfg)?;
        if action.len() != self.cfg.action_dim() {
            return Err(RoltError::Consistency(format!(
                "action length {} does not match L*J = {}",
                action.len(),
                self.cfg.action_dim()
            )));
        }
        let (mu, value, _) = self.forward_on(tape, obs, map, record, None);

        // Diagonal Gaussian log-density, mirrored exactly by
        // `gaussian_log_prob` below.
        let n = self.cfg.action_dim();
        let a = tape.constant(1, n, action.to_vec());
        let s = tape.param(self.ids.log_std);
        let neg_mu = tape.scale(mu, -1.0);
        let diff = tape.add(a, neg_mu);
        let sq = tape.mul(diff, diff);
        let m2 = tape.scale(s, -2.0);
        let e = tape.activation(m2, crate::tape::Act::Exp);
        let prod = tape.mul(sq, e);
        let sum1 = tape.sum(prod);
        let t1 = tape.scale(sum1, -0.5);
        let sum2 = tape.sum(s);
        let t2 = tape.scale(sum2, -1.0);
        let lp12 = tape.add(t1, t2);
        let log_prob = tape.add_const(lp12, gauss_norm_const(n));
        let entropy = tape.add_const(sum2, entropy_const(n));
        Ok(ReplayVars { log_prob, value, entropy })
    }

    /// Entropy of the current action distribution (depends only on log_std).
    pub fn entropy(&self) -> f64 {
        let s = &self.params.value(self.ids.log_std).data;
        s.iter().sum::<f64>() + entropy_const(s.len())
    }
}

/// Diagonal Gaussian log-density. Operation order mirrors the tape route in
/// `replay_on` so both produce bitwise-identical results.
pub fn gaussian_log_prob(action: &[f64], mu: &[f64], log_std: &[f64]) -> f64 {
    debug_assert_eq!(action.len(), mu.len());
    debug_assert_eq!(action.len(), log_std.len());
    let mut sum1 = 0.0;
    for i in 0..action.len() {
        let diff = action[i] + mu[i] * -1.0;
        let e = (log_std[i] * -2.0).exp();
        sum1 += diff * diff * e;
    }
    let t1 = sum1 * -0.5;
    let sum2: f64 = log_std.iter().sum();
    let t2 = sum2 * -1.0;
    (t1 + t2) + gauss_norm_const(action.len())
}
