//! Stacked dilated causal convolutions (STCN), their bidirectional sum
//! (BiTCN), and the shared/unique arrangement over modality channel slices.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Dilation of each STCN layer.
pub const DILATIONS: [usize; 4] = [1, 2, 4, 4];

/// Kernel width of every temporal convolution.
pub const KERNEL: usize = 2;

/// Input steps visible to one causal output step:
/// `1 + (K − 1)·Σ dilations`.
pub fn receptive_field(kernel: usize, dilations: &[usize]) -> usize {
    1 + (kernel - 1) * dilations.iter().sum::<usize>()
}

/// Weights `[C, C, K]` and biases `[C]` of the four STCN layers.
#[derive(Clone, Debug, PartialEq)]
pub struct StcnParams<T> {
    pub layers: Vec<(T, T)>,
}

impl<T> StcnParams<T> {
    pub fn try_map<U>(&self, f: &mut impl FnMut(&T) -> Result<U>) -> Result<StcnParams<U>> {
        Ok(StcnParams {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| Ok((f(w)?, f(b)?)))
                .collect::<Result<_>>()?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        for (i, (w, b)) in self.layers.iter().enumerate() {
            f(format!("{prefix}.l{i}.w"), w);
            f(format!("{prefix}.l{i}.b"), b);
        }
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        for (i, (w, b)) in self.layers.iter_mut().enumerate() {
            f(format!("{prefix}.l{i}.w"), w);
            f(format!("{prefix}.l{i}.b"), b);
        }
    }
}

impl StcnParams<Tensor> {
    pub fn zeros(channels: usize) -> Self {
        Self {
            layers: DILATIONS
                .iter()
                .map(|_| (Tensor::zeros(&[channels, channels, KERNEL]), Tensor::zeros(&[channels])))
                .collect(),
        }
    }

    /// Every layer passes channel `c` at the current step straight through.
    pub fn identity(channels: usize) -> Self {
        let mut p = Self::zeros(channels);
        for (w, _) in &mut p.layers {
            for c in 0..channels {
                w.set(&[c, c, 0], 1.0);
            }
        }
        p
    }

    pub fn channels(&self) -> usize {
        self.layers[0].1.len()
    }
}

/// Independent forward and backward STCN weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BitcnParams<T> {
    pub forward: StcnParams<T>,
    pub backward: StcnParams<T>,
}

impl<T> BitcnParams<T> {
    pub fn try_map<U>(&self, f: &mut impl FnMut(&T) -> Result<U>) -> Result<BitcnParams<U>> {
        Ok(BitcnParams {
            forward: self.forward.try_map(f)?,
            backward: self.backward.try_map(f)?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.forward.visit(&format!("{prefix}.fwd"), f);
        self.backward.visit(&format!("{prefix}.bwd"), f);
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        self.forward.visit_mut(&format!("{prefix}.fwd"), f);
        self.backward.visit_mut(&format!("{prefix}.bwd"), f);
    }
}

impl BitcnParams<Tensor> {
    pub fn zeros(channels: usize) -> Self {
        Self {
            forward: StcnParams::zeros(channels),
            backward: StcnParams::zeros(channels),
        }
    }
}

/// One shared BiTCN over all channels and one unique BiTCN per modality
/// slice.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalStackParams<T> {
    pub shared: BitcnParams<T>,
    pub unique: Vec<BitcnParams<T>>,
}

impl<T> TemporalStackParams<T> {
    pub fn try_map<U>(&self, f: &mut impl FnMut(&T) -> Result<U>) -> Result<TemporalStackParams<U>> {
        Ok(TemporalStackParams {
            shared: self.shared.try_map(f)?,
            unique: self
                .unique
                .iter()
                .map(|u| u.try_map(f))
                .collect::<Result<_>>()?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.shared.visit(&format!("{prefix}.shared"), f);
        for (m, u) in self.unique.iter().enumerate() {
            u.visit(&format!("{prefix}.unique{m}"), f);
        }
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        self.shared.visit_mut(&format!("{prefix}.shared"), f);
        for (m, u) in self.unique.iter_mut().enumerate() {
            u.visit_mut(&format!("{prefix}.unique{m}"), f);
        }
    }
}

impl TemporalStackParams<Tensor> {
    /// Zero weights for `channels` shared channels split into `slices`.
    pub fn zeros(channels: usize, slice_widths: &[usize]) -> Self {
        Self {
            shared: BitcnParams::zeros(channels),
            unique: slice_widths.iter().map(|&c| BitcnParams::zeros(c)).collect(),
        }
    }
}

/// Runtime switches for the temporal stack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalConfig {
    pub dropout: f64,
    pub training: bool,
    /// Drop the forward branch of every BiTCN.
    pub no_fstcn: bool,
    /// Drop the backward branch of every BiTCN.
    pub no_bstcn: bool,
}

impl TemporalConfig {
    pub fn eval() -> Self {
        Self {
            dropout: 0.0,
            training: false,
            no_fstcn: false,
            no_bstcn: false,
        }
    }
}

/// Four causal dilated conv → ReLU → dropout layers on `x: [B, C, P]`.
pub fn stcn_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    x: Var,
    params: &StcnParams<Var>,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if params.layers.len() != DILATIONS.len() {
        return Err(Error::Config(format!(
            "STCN needs {} layers, got {}",
            DILATIONS.len(),
            params.layers.len()
        )));
    }
    let mut h = x;
    for (&(w, b), &d) in params.layers.iter().zip(&DILATIONS) {
        h = tape.conv1d(h, w, b, d, true)?;
        h = tape.relu(h)?;
        h = tape.dropout(h, dropout, training, rng)?;
    }
    Ok(h)
}

/// `f_fwd(x) + Flip_t(f_bwd(Flip_t(x)))`.
pub fn bitcn_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    x: Var,
    params: &BitcnParams<Var>,
    cfg: &TemporalConfig,
    rng: &mut R,
) -> Result<Var> {
    if cfg.no_fstcn && cfg.no_bstcn {
        return Err(Error::Config("no_fstcn and no_bstcn together remove the temporal block".into()));
    }
    let time = tape.shape(x).len() - 1;
    let fwd = if cfg.no_fstcn {
        None
    } else {
        Some(stcn_forward(tape, x, &params.forward, cfg.dropout, cfg.training, rng)?)
    };
    let bwd = if cfg.no_bstcn {
        None
    } else {
        let rev = tape.flip(x, time)?;
        let h = stcn_forward(tape, rev, &params.backward, cfg.dropout, cfg.training, rng)?;
        Some(tape.flip(h, time)?)
    };
    match (fwd, bwd) {
        (Some(f), Some(b)) => tape.add(f, b),
        (Some(f), None) => Ok(f),
        (None, Some(b)) => Ok(b),
        (None, None) => unreachable!("rejected above"),
    }
}

/// Checks that `slices` tile `0..channels` in order.
pub fn validate_partition(slices: &[Range<usize>], channels: usize) -> Result<()> {
    let mut next = 0;
    for s in slices {
        if s.start != next || s.is_empty() {
            return Err(Error::Config(format!(
                "channel slices {slices:?} do not partition 0..{channels}"
            )));
        }
        next = s.end;
    }
    if next != channels {
        return Err(Error::Config(format!(
            "channel slices {slices:?} do not partition 0..{channels}"
        )));
    }
    Ok(())
}

/// Shared BiTCN over all channels, then each modality's unique BiTCN on its
/// own channel slice, concatenated back in modality order.
pub fn shared_unique_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    x: Var,
    stack: &TemporalStackParams<Var>,
    slices: &[Range<usize>],
    cfg: &TemporalConfig,
    rng: &mut R,
) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 {
        return Err(Error::shape("shared_unique_forward", format!("expected [B, C, P], got {s:?}")));
    }
    validate_partition(slices, s[1])?;
    if slices.len() != stack.unique.len() {
        return Err(Error::Config(format!(
            "{} channel slices for {} unique BiTCNs",
            slices.len(),
            stack.unique.len()
        )));
    }
    let h = bitcn_forward(tape, x, &stack.shared, cfg, rng)?;
    if slices.len() == 1 {
        return bitcn_forward(tape, h, &stack.unique[0], cfg, rng);
    }
    let mut parts = Vec::with_capacity(slices.len());
    for (r, p) in slices.iter().zip(&stack.unique) {
        let hm = tape.slice(h, 1, r.start, r.len())?;
        parts.push(bitcn_forward(tape, hm, p, cfg, rng)?);
    }
    tape.concat(&parts, 1)
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::{grad_check, GradCheckOptions};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_stcn(c: usize, r: &mut ChaCha8Rng) -> StcnParams<Tensor> {
        StcnParams {
            layers: DILATIONS
                .iter()
                .map(|_| {
                    (
                        Tensor::uniform(&[c, c, KERNEL], -0.8, 0.8, r),
                        Tensor::uniform(&[c], -0.1, 0.3, r),
                    )
                })
                .collect(),
        }
    }

    fn random_bitcn(c: usize, r: &mut ChaCha8Rng) -> BitcnParams<Tensor> {
        BitcnParams {
            forward: random_stcn(c, r),
            backward: random_stcn(c, r),
        }
    }

    fn reg(p: &BitcnParams<Tensor>, tape: &mut Tape) -> BitcnParams<Var> {
        p.try_map(&mut |t| Ok(tape.param(t.clone()))).unwrap()
    }

    fn run_bitcn(x: &Tensor, p: &BitcnParams<Tensor>, cfg: &TemporalConfig) -> Tensor {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pv = reg(p, &mut tape);
        let y = bitcn_forward(&mut tape, xv, &pv, cfg, &mut rng(0)).unwrap();
        tape.value(y).clone()
    }

    fn run_stcn(x: &Tensor, p: &StcnParams<Tensor>) -> Tensor {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pv = p.try_map(&mut |t| Ok(tape.param(t.clone()))).unwrap();
        let y = stcn_forward(&mut tape, xv, &pv, 0.0, false, &mut rng(0)).unwrap();
        tape.value(y).clone()
    }

    fn ones_stcn() -> StcnParams<Tensor> {
        StcnParams {
            layers: DILATIONS
                .iter()
                .map(|_| (Tensor::ones(&[1, 1, KERNEL]), Tensor::zeros(&[1])))
                .collect(),
        }
    }

    fn impulse(p: usize, at: usize) -> Tensor {
        let mut x = Tensor::zeros(&[1, 1, p]);
        x.set(&[0, 0, at], 1.0);
        x
    }

    /// Steps where the two tensors differ, per time index.
    fn changed_steps(a: &Tensor, b: &Tensor) -> Vec<usize> {
        let p = *a.shape().last().unwrap();
        (0..p)
            .filter(|&t| {
                a.data().iter().zip(b.data()).enumerate().any(|(i, (x, y))| i % p == t && x != y)
            })
            .collect()
    }

    #[test]
    fn receptive_field_is_twelve() {
        assert_eq!(receptive_field(KERNEL, &DILATIONS), 12);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let x = Tensor::uniform(&[2, 3, 12], -1.0, 1.0, &mut rng(1));
        let y = run_stcn(&x, &StcnParams::zeros(3));
        assert_eq!(y, Tensor::zeros(&[2, 3, 12]));
    }

    #[test]
    fn impulse_at_last_step_stays_there() {
        let y = run_stcn(&impulse(12, 11), &ones_stcn());
        for t in 0..12 {
            assert_eq!(y.data()[t] != 0.0, t == 11, "step {t}");
        }
    }

    #[test]
    fn forward_support_is_exactly_twelve_steps() {
        let y = run_stcn(&impulse(16, 0), &ones_stcn());
        let support: Vec<usize> = (0..16).filter(|&t| y.data()[t] != 0.0).collect();
        assert_eq!(support, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn stcn_is_causal() {
        let mut r = rng(2);
        let p = random_stcn(2, &mut r);
        let x = Tensor::uniform(&[1, 2, 12], -1.0, 1.0, &mut r);
        let base = run_stcn(&x, &p);
        let mut xp = x.clone();
        xp.set(&[0, 0, 5], x.get(&[0, 0, 5]) + 1.0);
        let changed = changed_steps(&base, &run_stcn(&xp, &p));
        assert!(changed.iter().all(|&t| t >= 5), "{changed:?}");
        assert!(!changed.is_empty());
    }

    #[test]
    fn zero_backward_branch_is_forward_only() {
        let mut r = rng(3);
        let mut p = random_bitcn(2, &mut r);
        p.backward = StcnParams::zeros(2);
        let x = Tensor::uniform(&[1, 2, 12], -1.0, 1.0, &mut r);
        let full = run_bitcn(&x, &p, &TemporalConfig::eval());
        let fwd_only = run_bitcn(
            &x,
            &p,
            &TemporalConfig {
                no_bstcn: true,
                ..TemporalConfig::eval()
            },
        );
        assert_eq!(full, fwd_only);
        assert_eq!(full, run_stcn(&x, &p.forward));
    }

    #[test]
    fn mirrored_parameters_keep_symmetric_input_symmetric() {
        let mut r = rng(4);
        let f = random_stcn(2, &mut r);
        let p = BitcnParams {
            forward: f.clone(),
            backward: f,
        };
        let half = Tensor::uniform(&[1, 2, 6], -1.0, 1.0, &mut r);
        let mut x = Tensor::zeros(&[1, 2, 12]);
        for c in 0..2 {
            for t in 0..6 {
                x.set(&[0, c, t], half.get(&[0, c, t]));
                x.set(&[0, c, 11 - t], half.get(&[0, c, t]));
            }
        }
        let y = run_bitcn(&x, &p, &TemporalConfig::eval());
        for c in 0..2 {
            for t in 0..12 {
                assert!((y.get(&[0, c, t]) - y.get(&[0, c, 11 - t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bidirectional_output_sees_every_step() {
        let mut r = rng(5);
        let p = BitcnParams {
            forward: ones_stcn(),
            backward: ones_stcn(),
        };
        for t0 in [0, 5, 11] {
            let x = Tensor::uniform(&[1, 1, 12], 0.1, 1.0, &mut r);
            let base = run_bitcn(&x, &p, &TemporalConfig::eval());
            let mut xp = x.clone();
            xp.set(&[0, 0, t0], x.get(&[0, 0, t0]) + 0.5);
            let fwd_changed = changed_steps(&run_stcn(&x, &p.forward), &run_stcn(&xp, &p.forward));
            assert!(fwd_changed.iter().all(|&t| t >= t0));
            let bwd_cfg = TemporalConfig {
                no_fstcn: true,
                ..TemporalConfig::eval()
            };
            let bwd_changed = changed_steps(&run_bitcn(&x, &p, &bwd_cfg), &run_bitcn(&xp, &p, &bwd_cfg));
            assert!(bwd_changed.iter().all(|&t| t <= t0));
            let changed = changed_steps(&base, &run_bitcn(&xp, &p, &TemporalConfig::eval()));
            assert_eq!(changed, (0..12).collect::<Vec<_>>(), "perturbing step {t0}");
        }
    }

    #[test]
    fn both_branches_off_is_an_error() {
        let p = BitcnParams::zeros(1);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 1, 4]));
        let pv = reg(&p, &mut tape);
        let cfg = TemporalConfig {
            no_fstcn: true,
            no_bstcn: true,
            ..TemporalConfig::eval()
        };
        assert!(bitcn_forward(&mut tape, x, &pv, &cfg, &mut rng(0)).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(validate_partition(&[0..2, 2..5], 5).is_ok());
        assert!(validate_partition(&[0..2, 3..5], 5).is_err());
        assert!(validate_partition(&[0..2, 2..4], 5).is_err());
        assert!(validate_partition(&[0..0, 0..5], 5).is_err());
    }

    fn run_stack(x: &Tensor, p: &TemporalStackParams<Tensor>, slices: &[Range<usize>]) -> Tensor {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pv = p.try_map(&mut |t| Ok(tape.param(t.clone()))).unwrap();
        let y = shared_unique_forward(&mut tape, xv, &pv, slices, &TemporalConfig::eval(), &mut rng(0)).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn identity_unique_stage_passes_shared_output() {
        let mut r = rng(6);
        let shared = random_bitcn(5, &mut r);
        let id = |c| BitcnParams {
            forward: StcnParams::identity(c),
            backward: StcnParams::zeros(c),
        };
        let p = TemporalStackParams {
            shared: shared.clone(),
            unique: vec![id(3), id(2)],
        };
        let x = Tensor::uniform(&[2, 5, 12], -1.0, 1.0, &mut r);
        let y = run_stack(&x, &p, &[0..3, 3..5]);
        assert_eq!(y, run_bitcn(&x, &shared, &TemporalConfig::eval()));

        let single = TemporalStackParams {
            shared: shared.clone(),
            unique: vec![id(5)],
        };
        assert_eq!(run_stack(&x, &single, &[0..5]), y);
    }

    #[test]
    fn unique_stage_is_isolated_per_modality() {
        let mut r = rng(7);
        let p = TemporalStackParams {
            shared: random_bitcn(5, &mut r),
            unique: vec![random_bitcn(3, &mut r), random_bitcn(2, &mut r)],
        };
        let h = Tensor::uniform(&[1, 5, 12], 0.0, 1.0, &mut r);
        let run_unique = |h: &Tensor| {
            let mut tape = Tape::new();
            let hv = tape.constant(h.clone());
            let pv = p.try_map(&mut |t| Ok(tape.param(t.clone()))).unwrap();
            let a = tape.slice(hv, 1, 0, 3).unwrap();
            let ya = bitcn_forward(&mut tape, a, &pv.unique[0], &TemporalConfig::eval(), &mut rng(0)).unwrap();
            tape.value(ya).clone()
        };
        let mut zeroed = h.clone();
        for c in 3..5 {
            for t in 0..12 {
                zeroed.set(&[0, c, t], 0.0);
            }
        }
        assert_eq!(run_unique(&h), run_unique(&zeroed));
    }

    #[test]
    fn channelwise_identity_shared_stage_keeps_modalities_independent() {
        let mut r = rng(8);
        let p = TemporalStackParams {
            shared: BitcnParams {
                forward: StcnParams::identity(5),
                backward: StcnParams::zeros(5),
            },
            unique: vec![random_bitcn(3, &mut r), random_bitcn(2, &mut r)],
        };
        let x = Tensor::uniform(&[1, 5, 12], 0.0, 1.0, &mut r);
        let base = run_stack(&x, &p, &[0..3, 3..5]);
        let mut xp = x.clone();
        xp.set(&[0, 4, 6], 3.0);
        let y = run_stack(&xp, &p, &[0..3, 3..5]);
        for c in 0..3 {
            for t in 0..12 {
                assert_eq!(y.get(&[0, c, t]), base.get(&[0, c, t]));
            }
        }
    }

    #[test]
    fn shared_unique_gradients() {
        let mut r = rng(9);
        let p = TemporalStackParams {
            shared: random_bitcn(3, &mut r),
            unique: vec![random_bitcn(2, &mut r), random_bitcn(1, &mut r)],
        };
        let x = Tensor::uniform(&[2, 3, 6], -2.0, 2.0, &mut r);
        let target = Tensor::uniform(&[2, 3, 6], -1.0, 1.0, &mut r);
        let mut inputs = vec![("x".to_string(), x)];
        p.visit("t", &mut |name, t| inputs.push((name, t.clone())));
        let report = grad_check(
            |tape, v| {
                let mut it = v[1..].iter().copied();
                let pv = p.try_map(&mut |_| Ok(it.next().unwrap()))?;
                let y = shared_unique_forward(tape, v[0], &pv, &[0..2, 2..3], &TemporalConfig::eval(), &mut rng(0))?;
                tape.mae_loss(y, &target)
            },
            &inputs,
            GradCheckOptions {
                tol: 1e-4,
                ..GradCheckOptions::default()
            },
        )
        .unwrap();
        assert!(report.is_conclusive(), "{report}");
        assert!(report.passed(), "{report}");
    }
}
