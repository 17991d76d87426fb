//! Sweep the number of ST-layers on a small dataset.
//!
//! cargo run --release --example sweep

use gsabt::data::{synth_generate, Dataset, NormKind, SplitBounds, SynthModality, STEPS_PER_DAY};
use gsabt::model::ModelConfig;
use gsabt::train::{run_sweep, write_sweep_table, SweepParam, TrainConfig};

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
    let parts = synth_generate(&[grid("taxi", 2, 4, 100.0), grid("bike", 2, 3, 20.0)], 28, 4)?;
    let data = Dataset::prepare(&parts, 12, 12, SplitBounds::weeks(2, 1, 1, STEPS_PER_DAY), NormKind::MinMax)?;
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
    let param = SweepParam::StLayers;
    let runs = run_sweep(param, &base, &budget, &data)?;
    for run in &runs {
        let o = run.report.overall();
        println!(
            "{:<12} best epoch {}  test MAE {:.3}  RMSE {:.3}",
            run.label, run.outcome.best_epoch, o.mae, o.rmse
        );
    }
    println!("\nfull-scale optimum: {}", param.label(param.reference_optimum()));
    write_sweep_table(&runs, param, std::io::stdout())
}
