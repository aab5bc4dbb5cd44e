//! Parameter construction and initialization for all variants.

use super::{ModelConfig, Variant};
use crate::rng::{derive, stream};
use crate::tape::{ParamId, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct EncoderLayerIds {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
}

#[derive(Debug, Clone)]
pub struct TransformerIds {
    pub leg_w1: ParamId,
    pub leg_b1: ParamId,
    pub leg_w2: ParamId,
    pub leg_b2: ParamId,
    /// Shared per-leg block of the action-token projection (J×D), absent for
    /// module_pe.
    pub action_w: Option<ParamId>,
    pub action_b: Option<ParamId>,
    /// Per-leg learnable PEs, module_pe only.
    pub leg_pe: Option<ParamId>,
    pub patch_w: ParamId,
    pub patch_b: ParamId,
    pub patch_pe: ParamId,
    pub pe_replacement: ParamId,
    pub layers: Vec<EncoderLayerIds>,
    pub final_ln_g: ParamId,
    pub final_ln_b: ParamId,
    pub dec_w: ParamId,
    pub dec_b: ParamId,
    pub val_w: ParamId,
    pub val_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct MlpIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub act_w: ParamId,
    pub act_b: ParamId,
    pub val_w: ParamId,
    pub val_b: ParamId,
}

#[derive(Debug, Clone)]
pub enum NetIds {
    Transformer(TransformerIds),
    Mlp(MlpIds),
}

#[derive(Debug, Clone)]
pub struct ParamIds {
    pub net: NetIds,
    pub log_std: ParamId,
}

fn linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> (ParamId, ParamId) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
        .collect();
    let w = store.add(&format!("{name}.w"), Tensor::matrix(fan_in, fan_out, data));
    let b = store.add(&format!("{name}.b"), Tensor::new(vec![1, fan_out], vec![0.0; fan_out]));
    (w, b)
}

fn embedding(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize) -> ParamId {
    let data: Vec<f64> = (0..rows * cols).map(|_| gauss(rng) * 0.02).collect();
    store.add(name, Tensor::matrix(rows, cols, data))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn layer_norm_params(store: &mut ParamStore, name: &str, dim: usize) -> (ParamId, ParamId) {
    let g = store.add(&format!("{name}.g"), Tensor::new(vec![1, dim], vec![1.0; dim]));
    let b = store.add(&format!("{name}.b"), Tensor::new(vec![1, dim], vec![0.0; dim]));
    (g, b)
}

/// Build and initialize the parameter store for a config. Registration order
/// is the serialization manifest order.
pub fn build_params(cfg: &ModelConfig, seed: u64) -> (ParamStore, ParamIds) {
    let mut rng = derive(seed, &[stream::PARAM_INIT]);
    let mut store = ParamStore::new();
    let d = cfg.hidden_dim;
    let j = cfg.joints_per_leg;

    let net = if cfg.variant.is_transformer() {
        let (leg_w1, leg_b1) = linear(&mut store, &mut rng, "leg_mlp.l1", cfg.leg_input_len(), 2 * d);
        let (leg_w2, leg_b2) = linear(&mut store, &mut rng, "leg_mlp.l2", 2 * d, d);
        let (action_w, action_b, leg_pe) = if cfg.variant == Variant::ModulePe {
            let pe = embedding(&mut store, &mut rng, "leg_pe", cfg.legs, d);
            (None, None, Some(pe))
        } else {
            let (w, b) = linear(&mut store, &mut rng, "action_proj", j, d);
            (Some(w), Some(b), None)
        };
        let (patch_w, patch_b) = linear(&mut store, &mut rng, "patch_embed", cfg.patch_len(), d);
        let patch_pe = embedding(&mut store, &mut rng, "patch_pe", cfg.patches(), d);
        let pe_replacement = embedding(&mut store, &mut rng, "pe_replacement", 1, d);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = format!("enc{l}");
            let (ln1_g, ln1_b) = layer_norm_params(&mut store, &format!("{p}.ln1"), d);
            let (wq, bq) = linear(&mut store, &mut rng, &format!("{p}.attn.q"), d, d);
            let (wk, bk) = linear(&mut store, &mut rng, &format!("{p}.attn.k"), d, d);
            let (wv, bv) = linear(&mut store, &mut rng, &format!("{p}.attn.v"), d, d);
            let (wo, bo) = linear(&mut store, &mut rng, &format!("{p}.attn.o"), d, d);
            let (ln2_g, ln2_b) = layer_norm_params(&mut store, &format!("{p}.ln2"), d);
            let (ffn_w1, ffn_b1) = linear(&mut store, &mut rng, &format!("{p}.ffn.l1"), d, cfg.ffn_dim);
            let (ffn_w2, ffn_b2) = linear(&mut store, &mut rng, &format!("{p}.ffn.l2"), cfg.ffn_dim, d);
            layers.push(EncoderLayerIds {
                ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b,
                ffn_w1, ffn_b1, ffn_w2, ffn_b2,
            });
        }
        let (final_ln_g, final_ln_b) = layer_norm_params(&mut store, "final_ln", d);
        let (dec_w, dec_b) = linear(&mut store, &mut rng, "decoder", d, j);
        let (val_w, val_b) = linear(&mut store, &mut rng, "value", d, 1);
        NetIds::Transformer(TransformerIds {
            leg_w1, leg_b1, leg_w2, leg_b2, action_w, action_b, leg_pe,
            patch_w, patch_b, patch_pe, pe_replacement, layers,
            final_ln_g, final_ln_b, dec_w, dec_b, val_w, val_b,
        })
    } else {
        let (h1, h2) = cfg.mlp_hidden;
        let (w1, b1) = linear(&mut store, &mut rng, "mlp.l1", cfg.mlp_input_len(), h1);
        let (w2, b2) = linear(&mut store, &mut rng, "mlp.l2", h1, h2);
        let (act_w, act_b) = linear(&mut store, &mut rng, "action_head", h2, cfg.action_dim());
        let (val_w, val_b) = linear(&mut store, &mut rng, "value", h2, 1);
        NetIds::Mlp(MlpIds { w1, b1, w2, b2, act_w, act_b, val_w, val_b })
    };

    let log_std = store.add("log_std", Tensor::new(vec![1, cfg.action_dim()], vec![0.0; cfg.action_dim()]));
    (store, ParamIds { net, log_std })
}
