//! The clipped-surrogate PPO update. Log-probs are recomputed through
//! `Policy::replay_on` under each transition's stored mask record — the
//! consistent-dropout mechanism — so before the first gradient step every
//! ratio is 1.

use super::{ObsNormalizer, PpoConfig, RolloutBuffer};
use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Result, RoltError};
use crate::model::Policy;
use crate::obs::ProprioObs;
use crate::tape::{GradBuffer, Tape};
use rayon::prelude::*;

/// Fixed gradient-chunk width: chunk boundaries depend only on batch size,
/// never on thread count, so reductions are order-stable.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, Default)]
pub struct UpdateStats {
    /// max |ratio − 1| over the whole buffer before the first gradient step.
    pub pre_ratio_max_dev: f64,
    pub pre_ratio_mean: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Mean pre-clip global gradient norm over minibatches.
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Ratios exp(new − old) for every transition under the current parameters,
/// computed before any gradient step.
pub fn pre_update_ratios(
    policy: &Policy,
    buffer: &RolloutBuffer,
    norm_obs: &[ProprioObs],
) -> Result<Vec<f64>> {
    let chunks: Vec<(usize, usize)> = chunk_ranges(buffer.len());
    let results: Vec<Result<Vec<f64>>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut out = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                let tr = &buffer.transitions[i];
                let (lp, _, _) =
                    policy.logprob_under_record(&norm_obs[i], &tr.map, &tr.action, &tr.record)?;
                out.push((lp - tr.log_prob).exp());
            }
            Ok(out)
        })
        .collect();
    let mut ratios = Vec::with_capacity(buffer.len());
    for r in results {
        ratios.extend(r?);
    }
    Ok(ratios)
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(GRAD_CHUNK))
        .map(|c| (c * GRAD_CHUNK, ((c + 1) * GRAD_CHUNK).min(n)))
        .collect()
}

struct MinibatchAccum {
    grads: GradBuffer,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    clipped: usize,
    non_finite: bool,
}

/// Run the full PPO update: normalize advantages over the buffer, sweep
/// pre-update ratios, then epochs × minibatches of clipped-surrogate descent
/// with mask-record reuse, returning aggregate statistics.
pub fn ppo_update(
    policy: &mut Policy,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    adam: &mut AdamState,
    normalizer: &ObsNormalizer,
    seed: u64,
    iteration: usize,
) -> Result<UpdateStats> {
    assert_eq!(buffer.advantages.len(), buffer.len(), "run compute_gae first");
    let n = buffer.len();

    // Advantage normalization: zero mean, unit variance over the update batch.
    let mean: f64 = buffer.advantages.iter().sum::<f64>() / n as f64;
    let var: f64 = buffer.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    for a in &mut buffer.advantages {
        *a = (*a - mean) / std;
    }

    // Normalize observations once; rollout and replay share this transform.
    let norm_obs: Vec<ProprioObs> =
        buffer.transitions.iter().map(|t| normalizer.normalize(&t.obs)).collect();

    let ratios = pre_update_ratios(policy, buffer, &norm_obs)?;
    let pre_ratio_max_dev = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let pre_ratio_mean = ratios.iter().sum::<f64>() / n as f64;

    let mut stats = UpdateStats {
        pre_ratio_max_dev,
        pre_ratio_mean,
        ..Default::default()
    };

    let adam_cfg = AdamConfig { lr: cfg.learning_rate, ..Default::default() };
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = crate::rng::derive(seed, &[crate::rng::stream::SHUFFLE, iteration as u64, epoch as u64]);
        shuffle(&mut order, &mut rng);
        let per = n.div_ceil(cfg.minibatches);
        for mb in 0..cfg.minibatches {
            let lo = mb * per;
            if lo >= n {
                break;
            }
            let hi = ((mb + 1) * per).min(n);
            let indices = &order[lo..hi];
            let acc = minibatch_grads(policy, buffer, &norm_obs, indices, cfg)?;
            if acc.non_finite {
                return Err(RoltError::NonFinite(format!(
                    "loss in epoch {epoch} minibatch {mb} (indices {lo}..{hi}); \
                     adv mean {mean:.3e} std {std:.3e}, pre-update max|r-1| {pre_ratio_max_dev:.3e}"
                )));
            }
            let mut grads = acc.grads;
            let pre_norm = grads.clip_global_norm(cfg.grad_clip);
            adam_step(&mut policy.params, &grads, adam, &adam_cfg);

            let b = indices.len() as f64;
            stats.policy_loss += acc.policy_loss / b;
            stats.value_loss += acc.value_loss / b;
            stats.entropy += acc.entropy / b;
            stats.clip_fraction += acc.clipped as f64 / b;
            stats.grad_norm += pre_norm;
            stats.minibatches += 1;
        }
    }
    let m = stats.minibatches.max(1) as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.clip_fraction /= m;
    stats.grad_norm /= m;
    Ok(stats)
}

/// Gradient of the mean minibatch loss, accumulated over fixed-width chunks
/// in index order.
fn minibatch_grads(
    policy: &Policy,
    buffer: &RolloutBuffer,
    norm_obs: &[ProprioObs],
    indices: &[usize],
    cfg: &PpoConfig,
) -> Result<MinibatchAccum> {
    let b = indices.len() as f64;
    let chunks = chunk_ranges(indices.len());
    let partials: Vec<Result<MinibatchAccum>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = MinibatchAccum {
                grads: GradBuffer::zeros_like(&policy.params),
                policy_loss: 0.0,
                value_loss: 0.0,
                entropy: 0.0,
                clipped: 0,
                non_finite: false,
            };
            let mut tape = Tape::new(&policy.params);
            for &i in &indices[lo..hi] {
                tape.reset();
                let tr = &buffer.transitions[i];
                let adv = buffer.advantages[i];
                let ret = buffer.returns[i];
                let vars = policy.replay_on(&mut tape, &norm_obs[i], &tr.map, &tr.action, &tr.record)?;

                // ratio r = exp(new − old); clipped surrogate on a constant
                // advantage.
                let d = tape.add_const(vars.log_prob, -tr.log_prob);
                let r = tape.activation(d, crate::tape::Act::Exp);
                let s1 = tape.scale(r, adv);
                let rc = tape.clamp(r, 1.0 - cfg.clip, 1.0 + cfg.clip);
                let s2 = tape.scale(rc, adv);
                let m = tape.min_elem(s1, s2);
                let pol = tape.scale(m, -1.0);

                let dv = tape.add_const(vars.value, -ret);
                let vmse = tape.mul(dv, dv);
                let vterm = tape.scale(vmse, cfg.value_coef);

                let eterm = tape.scale(vars.entropy, -cfg.entropy_coef);

                let pv = tape.add(pol, vterm);
                let total = tape.add(pv, eterm);
                let loss = tape.scale(total, 1.0 / b);

                let loss_val = tape.data(loss)[0];
                if !loss_val.is_finite() {
                    acc.non_finite = true;
                    return Ok(acc);
                }
                tape.backward(loss, &mut acc.grads);

                let r_val = tape.data(r)[0];
                if (r_val - 1.0).abs() > cfg.clip {
                    acc.clipped += 1;
                }
                acc.policy_loss += tape.data(pol)[0];
                acc.value_loss += tape.data(vmse)[0];
                acc.entropy += tape.data(vars.entropy)[0];
            }
            Ok(acc)
        })
        .collect();

    let mut total = MinibatchAccum {
        grads: GradBuffer::zeros_like(&policy.params),
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clipped: 0,
        non_finite: false,
    };
    for p in partials {
        let p = p?;
        total.grads.add_from(&p.grads);
        total.policy_loss += p.policy_loss;
        total.value_loss += p.value_loss;
        total.entropy += p.entropy;
        total.clipped += p.clipped;
        total.non_finite |= p.non_finite;
    }
    Ok(total)
}

/// Fisher-Yates with our deterministic stream.
fn shuffle<R: rand::Rng>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}
