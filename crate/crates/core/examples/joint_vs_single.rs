//! Joint training on both modalities against one model per modality, with
//! identical budgets and seeds.
//!
//! cargo run --release --example joint_vs_single

use gsabt::data::{synth_generate, NormKind, SplitBounds, SynthModality, STEPS_PER_DAY};
use gsabt::model::ModelConfig;
use gsabt::train::{run_joint_vs_single, TrainConfig};

fn main() -> gsabt::Result<()> {
    let grid = |name: &str, rows, cols, scale| SynthModality {
        name: name.into(),
        rows,
        cols,
        features: 1,
        scale,
        base: 1.0,
        daily_amp: 0.5,
        half_day_amp: 0.2,
        coupling: 0.6,
        noise: 0.1,
    };
    let parts = synth_generate(&[grid("taxi", 3, 4, 100.0), grid("bike", 3, 3, 20.0)], 28, 6)?;
    let base = ModelConfig {
        d_h: 8,
        d_f: Some(4),
        top_u: 8,
        ..ModelConfig::default()
    };
    let budget = TrainConfig {
        epochs: 8,
        learning_rate: 2e-3,
        window_stride: 2,
        val_stride: 4,
        ..TrainConfig::default()
    };
    let bounds = SplitBounds::weeks(2, 1, 1, STEPS_PER_DAY);
    let cmp = run_joint_vs_single(&parts, &base, &budget, bounds, NormKind::MinMax)?;
    cmp.write_csv(std::io::stdout())?;
    println!("joint training wins on: {:?}", cmp.joint_wins());
    Ok(())
}
