use std::fmt;

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Knobs for [`grad_check`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Denominator floor for the relative error, so exactly-zero gradients
    /// are judged by absolute error.
    pub abs_floor: f64,
    /// How many times a perturbation that straddles a kink is retried with
    /// the step divided by ten.
    pub refinements: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tol: 1e-5,
            abs_floor: 1e-6,
            refinements: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub numel: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Per-input comparison of analytic and central-difference gradients.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tol: f64,
    /// Elements whose perturbation kept moving the function onto a different
    /// smooth piece (a relu gate, an abs sign, or a top-U selection flipped)
    /// even at the smallest step. Such points say nothing about gradient
    /// correctness; callers resample the inputs.
    pub kink_crossings: usize,
    /// Elements that needed a reduced step to stay on one smooth piece.
    pub refined: usize,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    /// No perturbation crossed a kink.
    pub fn is_conclusive(&self) -> bool {
        self.kink_crossings == 0
    }

    pub fn passed(&self) -> bool {
        self.is_conclusive() && self.max_rel_err() <= self.tol
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:>8} {:>12} {:>12}", "input", "numel", "max_rel", "max_abs")?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<32} {:>8} {:>12.3e} {:>12.3e}",
                e.name, e.numel, e.max_rel_err, e.max_abs_err
            )?;
        }
        writeln!(
            f,
            "refined steps: {}, unresolved kink crossings: {}",
            self.refined, self.kink_crossings
        )?;
        write!(
            f,
            "max relative error {:.3e} (tol {:.1e}): {}",
            self.max_rel_err(),
            self.tol,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Compares the tape gradient of scalar `f` with central differences for
/// every element of every input.
///
/// `f` receives a fresh tape and the inputs registered as tracked leaves, in
/// order, and must be deterministic.
pub fn grad_check<F>(f: F, inputs: &[(String, Tensor)], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<(f64, u64)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape.value(out).item(), tape.kink_signature()))
    };

    let mut values: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let base_sig = tape.kink_signature();
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(&values)
        .map(|(v, t)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    drop(tape);

    let mut entries = Vec::with_capacity(inputs.len());
    let mut kink_crossings = 0;
    let mut refined = 0;
    for (k, (name, _)) in inputs.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for j in 0..values[k].len() {
            let orig = values[k].data()[j];
            let mut step = opts.step;
            let mut numeric = None;
            for attempt in 0..=opts.refinements {
                values[k].data_mut()[j] = orig + step;
                let (fp, sp) = eval(&values)?;
                values[k].data_mut()[j] = orig - step;
                let (fm, sm) = eval(&values)?;
                values[k].data_mut()[j] = orig;
                if sp == base_sig && sm == base_sig {
                    numeric = Some((fp - fm) / (2.0 * step));
                    refined += usize::from(attempt > 0);
                    break;
                }
                step /= 10.0;
            }
            let Some(numeric) = numeric else {
                kink_crossings += 1;
                continue;
            };
            let a = analytic[k].data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.abs_floor);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        entries.push(GradCheckEntry {
            name: name.clone(),
            numel: values[k].len(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    Ok(GradCheckReport {
        entries,
        tol: opts.tol,
        kink_crossings,
        refined,
    })
}
