//! Which modality each query's surviving Top-U keys come from, after a short
//! joint training run.
//!
//! cargo run --release --example attention_census

use gsabt::data::{synth_generate, Dataset, NormKind, Split, SplitBounds, SynthModality, STEPS_PER_DAY};
use gsabt::model::ModelConfig;
use gsabt::train::{attention_census, train_and_evaluate, TrainConfig};

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
    let parts = synth_generate(&[grid("taxi", 3, 4, 100.0), grid("bike", 3, 3, 20.0)], 28, 5)?;
    let data = Dataset::prepare(&parts, 12, 12, SplitBounds::weeks(2, 1, 1, STEPS_PER_DAY), NormKind::MinMax)?;
    let base = ModelConfig {
        d_h: 8,
        d_f: Some(4),
        top_u: 6,
        ..ModelConfig::default()
    };
    let budget = TrainConfig {
        epochs: 8,
        learning_rate: 2e-3,
        window_stride: 2,
        val_stride: 4,
        ..TrainConfig::default()
    };
    let run = train_and_evaluate("joint", &base, &budget, &data, Split::Test)?;
    let census = attention_census(&run.outcome.best, &data, Split::Test)?;
    println!("{} queries over {} layers", census.samples, census.layers);
    for (t, target) in census.names.iter().enumerate() {
        for (s, pct) in census.proportions(t).iter().enumerate() {
            println!("  {target:<5} <- {:<5} {pct:>6.2}%", census.names[s]);
        }
    }
    println!("intra-modal {}  cross-modal {}", census.intra(), census.cross());
    Ok(())
}
