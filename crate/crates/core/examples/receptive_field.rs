//! Which input steps reach each output step of the forward STCN, the
//! backward branch, and their bidirectional sum.
//!
//! cargo run --example receptive_field

use gsabt::temporal::{bitcn_forward, receptive_field, BitcnParams, TemporalConfig, DILATIONS, KERNEL};
use gsabt::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const P: usize = 16;

fn run(p: &BitcnParams<Tensor>, cfg: &TemporalConfig, x: &Tensor) -> gsabt::Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv = p.try_map(&mut |t| Ok(tape.constant(t.clone())))?;
    let y = bitcn_forward(&mut tape, xv, &pv, cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    Ok(tape.value(y).clone())
}

/// One row per output step; `#` marks the input steps it depends on.
fn print_support(label: &str, p: &BitcnParams<Tensor>, cfg: TemporalConfig) -> gsabt::Result<()> {
    let x = Tensor::full(&[1, 1, P], 0.5);
    let base = run(p, &cfg, &x)?;
    let mut deps = vec![vec!['.'; P]; P];
    for s in 0..P {
        let mut xp = x.clone();
        xp.set(&[0, 0, s], 1.5);
        let y = run(p, &cfg, &xp)?;
        for (t, row) in deps.iter_mut().enumerate() {
            if y.get(&[0, 0, t]) != base.get(&[0, 0, t]) {
                row[s] = '#';
            }
        }
    }
    println!("{label}");
    for (t, row) in deps.iter().enumerate() {
        println!("  t={t:>2} {}", row.iter().collect::<String>());
    }
    Ok(())
}

fn main() -> gsabt::Result<()> {
    println!("kernel {KERNEL}, dilations {DILATIONS:?}, receptive field {}", receptive_field(KERNEL, &DILATIONS));
    let mut p = BitcnParams::zeros(1);
    for s in [&mut p.forward, &mut p.backward] {
        for (w, _) in &mut s.layers {
            *w = Tensor::full(w.shape(), 0.5);
        }
    }
    let eval = TemporalConfig::eval();
    print_support("forward", &p, TemporalConfig { no_bstcn: true, ..eval })?;
    print_support("backward", &p, TemporalConfig { no_fstcn: true, ..eval })?;
    print_support("bidirectional", &p, eval)?;
    Ok(())
}
