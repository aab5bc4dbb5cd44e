//! Tape-level forward passes for the transformer body and the MLP baselines.

use super::params::{MlpIds, TransformerIds};
use super::{DropoutMaskRecord, MaskMode, ModelConfig};
use crate::obs::{ElevationMap, ProprioObs};
use crate::tape::{Act, Tape, Var};
use crate::tensor::BitMask;

/// Heights are clipped to ±1 m before entering the network.
const HEIGHT_CLIP: f64 = 1.0;

pub struct TransformerOut {
    #[allow(dead_code)] // read by analysis/tests, not the training path
    pub final_tokens: Var,
    /// attention[layer][head], each T×T.
    pub attention: Vec<Vec<Var>>,
    pub mu: Var,
    pub value: Var,
}

pub struct MlpOut {
    pub mu: Var,
    pub value: Var,
}

fn clip_height(h: f64) -> f64 {
    h.clamp(-HEIGHT_CLIP, HEIGHT_CLIP)
}

/// Per-leg tokenizer inputs as an L×(hist+1+5) row-major matrix:
/// [history block ‖ command ‖ IMU] per leg.
fn leg_input_matrix(cfg: &ModelConfig, obs: &ProprioObs) -> Vec<f64> {
    let in_len = cfg.leg_input_len();
    assert_eq!(
        obs.leg_hist.len(),
        cfg.legs,
        "observation has {} legs, config expects {}",
        obs.leg_hist.len(),
        cfg.legs
    );
    let mut out = Vec::with_capacity(cfg.legs * in_len);
    for hist in &obs.leg_hist {
        assert_eq!(
            hist.len(),
            cfg.history * 3 * cfg.joints_per_leg,
            "leg history block length {} does not match history {} x 3J",
            hist.len(),
            cfg.history
        );
        out.extend_from_slice(hist);
        out.push(obs.command);
        out.extend_from_slice(&obs.imu);
    }
    out
}

/// P×patch_len matrix of flattened (row-major) patches, heights clipped.
fn patch_matrix(cfg: &ModelConfig, map: &ElevationMap) -> Vec<f64> {
    assert_eq!(
        (map.rows, map.cols),
        (cfg.map_rows, cfg.map_cols),
        "elevation map {}x{} does not match config {}x{}",
        map.rows,
        map.cols,
        cfg.map_rows,
        cfg.map_cols
    );
    let ph = cfg.map_rows / cfg.patch_rows;
    let pw = cfg.map_cols / cfg.patch_cols;
    let mut out = Vec::with_capacity(cfg.patches() * ph * pw);
    for pr in 0..cfg.patch_rows {
        for pc in 0..cfg.patch_cols {
            for r in 0..ph {
                for c in 0..pw {
                    out.push(clip_height(map.get(pr * ph + r, pc * pw + c)));
                }
            }
        }
    }
    out
}

/// Leg tokens (and the action token, for variants that have one) as an
/// (L+1)×D or L×D matrix. One shared MLP embeds every leg; the action token
/// is a shared per-leg projection of a_{t-1} summed over legs.
pub(super) fn tokenize_proprio(
    tape: &mut Tape,
    cfg: &ModelConfig,
    ids: &TransformerIds,
    obs: &ProprioObs,
) -> Var {
    let x = tape.constant(cfg.legs, cfg.leg_input_len(), leg_input_matrix(cfg, obs));
    let w1 = tape.param(ids.leg_w1);
    let b1 = tape.param(ids.leg_b1);
    let w2 = tape.param(ids.leg_w2);
    let b2 = tape.param(ids.leg_b2);
    let h = tape.matmul(x, w1);
    let h = tape.add_row(h, b1);
    let h = tape.activation(h, Act::Elu);
    let e = tape.matmul(h, w2);
    let mut legs = tape.add_row(e, b2);

    if let Some(pe) = ids.leg_pe {
        // module_pe: token-indexed learnable PEs instead of an action token.
        let pe_var = tape.param(pe);
        legs = tape.add(legs, pe_var);
        return legs;
    }

    assert_eq!(
        obs.prev_action.len(),
        cfg.action_dim(),
        "prev_action length {} does not match L*J = {}",
        obs.prev_action.len(),
        cfg.action_dim()
    );
    let a_prev = tape.constant(cfg.legs, cfg.joints_per_leg, obs.prev_action.clone());
    let aw = tape.param(ids.action_w.expect("action projection present"));
    let ab = tape.param(ids.action_b.expect("action projection present"));
    let per_leg = tape.matmul(a_prev, aw); // L×D
    let summed = {
        let ones = tape.constant(1, cfg.legs, vec![1.0; cfg.legs]);
        tape.matmul(ones, per_leg)
    };
    let action_token = tape.add_row(summed, ab);
    tape.concat_rows(&[legs, action_token])
}

/// Patch embeddings P×D. In train mode each patch gets its own PE if its keep
/// bit is set, otherwise the shared replacement vector; in eval mode every
/// patch gets its own PE regardless of the mask.
pub(super) fn patchify_embed(
    tape: &mut Tape,
    cfg: &ModelConfig,
    ids: &TransformerIds,
    map: &ElevationMap,
    pe_keep: &BitMask,
    mode: MaskMode,
) -> Var {
    let patches = tape.constant(cfg.patches(), cfg.patch_len(), patch_matrix(cfg, map));
    let w = tape.param(ids.patch_w);
    let b = tape.param(ids.patch_b);
    let lat = tape.matmul(patches, w);
    let latents = tape.add_row(lat, b);

    let pe_table = tape.param(ids.patch_pe);
    let use_all = mode == MaskMode::Eval || !cfg.variant.pe_dropout_enabled();
    let pe_rows = if use_all {
        pe_table
    } else {
        let replacement = tape.param(ids.pe_replacement);
        let rows: Vec<Var> = (0..cfg.patches())
            .map(|p| {
                if pe_keep.get(p) {
                    tape.slice_rows(pe_table, p, 1)
                } else {
                    replacement
                }
            })
            .collect();
        tape.concat_rows(&rows)
    };
    tape.add(latents, pe_rows)
}

/// One multi-head self-attention block over x (T×D). Returns the projected
/// output and the per-head attention weights.
pub(super) fn self_attention(
    tape: &mut Tape,
    cfg: &ModelConfig,
    l: &super::params::EncoderLayerIds,
    x: Var,
) -> (Var, Vec<Var>) {
    let d = cfg.hidden_dim;
    let dk = d / cfg.heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let wq = tape.param(l.wq);
    let bq = tape.param(l.bq);
    let wk = tape.param(l.wk);
    let bk = tape.param(l.bk);
    let wv = tape.param(l.wv);
    let bv = tape.param(l.bv);
    let q = tape.matmul(x, wq);
    let q = tape.add_row(q, bq);
    let k = tape.matmul(x, wk);
    let k = tape.add_row(k, bk);
    let v = tape.matmul(x, wv);
    let v = tape.add_row(v, bv);

    let mut mixed = Vec::with_capacity(cfg.heads);
    let mut weights = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = tape.slice_cols(q, h * dk, dk);
        let kh = tape.slice_cols(k, h * dk, dk);
        let vh = tape.slice_cols(v, h * dk, dk);
        let scores = tape.matmul_tb(qh, kh);
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax_rows(scores);
        weights.push(attn);
        mixed.push(tape.matmul(attn, vh));
    }
    let cat = tape.concat_cols(&mixed);
    let wo = tape.param(l.wo);
    let bo = tape.param(l.bo);
    let out = tape.matmul(cat, wo);
    (tape.add_row(out, bo), weights)
}

/// Stacked pre-norm encoder layers:
/// x + drop(attn(LN(x))) then x + drop(FFN(LN(x))), with a final LayerNorm.
/// Feature masks come from the record and apply only in train mode for
/// variants that enable feature dropout.
pub(super) fn encode(
    tape: &mut Tape,
    cfg: &ModelConfig,
    ids: &TransformerIds,
    e0: Var,
    record: &DropoutMaskRecord,
) -> (Var, Vec<Vec<Var>>) {
    let apply_feat = record.mode == MaskMode::Train && cfg.variant.feature_dropout_enabled();
    let mut x = e0;
    let mut attention = Vec::with_capacity(cfg.layers);
    for (li, l) in ids.layers.iter().enumerate() {
        let g1 = tape.param(l.ln1_g);
        let b1 = tape.param(l.ln1_b);
        let xn = tape.layer_norm(x, g1, b1, 1e-5);
        let (att, weights) = self_attention(tape, cfg, l, xn);
        attention.push(weights);
        let att = if apply_feat {
            tape.masked_dropout(att, &record.feat[2 * li], cfg.p_feat)
        } else {
            att
        };
        x = tape.add(x, att);

        let g2 = tape.param(l.ln2_g);
        let b2 = tape.param(l.ln2_b);
        let xn2 = tape.layer_norm(x, g2, b2, 1e-5);
        let fw1 = tape.param(l.ffn_w1);
        let fb1 = tape.param(l.ffn_b1);
        let fw2 = tape.param(l.ffn_w2);
        let fb2 = tape.param(l.ffn_b2);
        let f = tape.matmul(xn2, fw1);
        let f = tape.add_row(f, fb1);
        let f = tape.activation(f, Act::Gelu);
        let f = tape.matmul(f, fw2);
        let f = tape.add_row(f, fb2);
        let f = if apply_feat {
            tape.masked_dropout(f, &record.feat[2 * li + 1], cfg.p_feat)
        } else {
            f
        };
        x = tape.add(x, f);
    }
    let fg = tape.param(ids.final_ln_g);
    let fb = tape.param(ids.final_ln_b);
    let final_tokens = tape.layer_norm(x, fg, fb, 1e-5);
    (final_tokens, attention)
}

/// One shared D→J linear decode applied to the leg rows only, flattened
/// row-major to L·J.
pub(super) fn decode_actions(tape: &mut Tape, cfg: &ModelConfig, ids: &TransformerIds, final_tokens: Var) -> Var {
    let legs = tape.slice_rows(final_tokens, 0, cfg.legs);
    let w = tape.param(ids.dec_w);
    let b = tape.param(ids.dec_b);
    let a = tape.matmul(legs, w);
    let a = tape.add_row(a, b);
    tape.reshape(a, 1, cfg.action_dim())
}

/// Scalar value readout. Reads the action-token row; module_pe has no action
/// token, so it reads the mean of the leg rows instead.
pub(super) fn value_head(tape: &mut Tape, cfg: &ModelConfig, ids: &TransformerIds, final_tokens: Var) -> Var {
    let row = if ids.leg_pe.is_some() {
        let legs = tape.slice_rows(final_tokens, 0, cfg.legs);
        tape.mean_rows(legs)
    } else {
        tape.slice_rows(final_tokens, cfg.legs, 1)
    };
    let w = tape.param(ids.val_w);
    let b = tape.param(ids.val_b);
    let v = tape.matmul(row, w);
    tape.add_row(v, b)
}

pub(super) fn transformer_forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    ids: &TransformerIds,
    obs: &ProprioObs,
    map: &ElevationMap,
    record: &DropoutMaskRecord,
) -> TransformerOut {
    let prop = tokenize_proprio(tape, cfg, ids, obs);
    let patches = patchify_embed(tape, cfg, ids, map, &record.pe_keep, record.mode);
    let e0 = tape.concat_rows(&[prop, patches]);
    let (final_tokens, attention) = encode(tape, cfg, ids, e0, record);
    let mu = decode_actions(tape, cfg, ids, final_tokens);
    let value = value_head(tape, cfg, ids, final_tokens);
    TransformerOut { final_tokens, attention, mu, value }
}

/// Flat concatenation of all observations for the MLP baselines.
fn mlp_input(cfg: &ModelConfig, obs: &ProprioObs, map: &ElevationMap) -> Vec<f64> {
    assert_eq!(
        (map.rows, map.cols),
        (cfg.map_rows, cfg.map_cols),
        "elevation map {}x{} does not match config {}x{}",
        map.rows,
        map.cols,
        cfg.map_rows,
        cfg.map_cols
    );
    let mut out = Vec::with_capacity(cfg.mlp_input_len());
    for hist in &obs.leg_hist {
        out.extend_from_slice(hist);
    }
    out.extend_from_slice(&obs.imu);
    out.push(obs.command);
    out.extend_from_slice(&obs.prev_action);
    out.extend(map.heights.iter().map(|&h| clip_height(h)));
    out
}

/// The MLP baseline: two ELU hidden layers, then linear action and value
/// heads. `rollout_masks`, when given, are the roll_drop baseline's private
/// rollout-time dropout masks; they are never stored in the record.
pub(super) fn mlp_forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    ids: &MlpIds,
    obs: &ProprioObs,
    map: &ElevationMap,
    rollout_masks: Option<&[BitMask; 2]>,
) -> MlpOut {
    let x = tape.constant(1, cfg.mlp_input_len(), mlp_input(cfg, obs, map));
    let w1 = tape.param(ids.w1);
    let b1 = tape.param(ids.b1);
    let h1 = tape.matmul(x, w1);
    let h1 = tape.add_row(h1, b1);
    let mut h1 = tape.activation(h1, Act::Elu);
    if let Some(masks) = rollout_masks {
        h1 = tape.masked_dropout(h1, &masks[0], cfg.roll_drop_rate);
    }
    let w2 = tape.param(ids.w2);
    let b2 = tape.param(ids.b2);
    let h2 = tape.matmul(h1, w2);
    let h2 = tape.add_row(h2, b2);
    let mut h2 = tape.activation(h2, Act::Elu);
    if let Some(masks) = rollout_masks {
        h2 = tape.masked_dropout(h2, &masks[1], cfg.roll_drop_rate);
    }
    let aw = tape.param(ids.act_w);
    let ab = tape.param(ids.act_b);
    let mu = tape.matmul(h2, aw);
    let mu = tape.add_row(mu, ab);
    let vw = tape.param(ids.val_w);
    let vb = tape.param(ids.val_b);
    let v = tape.matmul(h2, vw);
    let value = tape.add_row(v, vb);
    MlpOut { mu, value }
}
