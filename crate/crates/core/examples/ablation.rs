//! Train the full model and its five ablated variants on the same data and
//! budget, and write the variant table.
//!
//! cargo run --release --example ablation

use gsabt::data::{synth_generate, Dataset, NormKind, SplitBounds, SynthModality, STEPS_PER_DAY};
use gsabt::model::ModelConfig;
use gsabt::train::{run_ablation_suite, write_variant_table, TrainConfig};

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
        coupling: 0.4,
        noise: 0.1,
    };
    let parts = synth_generate(&[grid("taxi", 3, 4, 100.0), grid("bike", 3, 3, 20.0)], 28, 2)?;
    let data = Dataset::prepare(&parts, 12, 12, SplitBounds::weeks(2, 1, 1, STEPS_PER_DAY), NormKind::MinMax)?;
    let base = ModelConfig {
        d_h: 8,
        d_f: Some(4),
        st_layers: 1,
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
    let runs = run_ablation_suite(&base, &budget, &data)?;
    for r in &runs {
        println!("{:<9} overall test MAE {:.3}", r.label, r.report.overall().mae);
    }
    println!();
    write_variant_table(&runs, std::io::stdout())
}
