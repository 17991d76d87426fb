//! Generate a coupled two-modality dataset, train a small model, and compare
//! its test metrics against the historical-average baseline.
//!
//! cargo run --release --example quickstart

use gsabt::data::{synth_generate, Dataset, NormKind, Split, SplitBounds, SynthModality, STEPS_PER_DAY};
use gsabt::model::{ModalityShape, Model, ModelConfig};
use gsabt::train::{evaluate, historical_average, train, TrainConfig};

fn grid(name: &str, rows: usize, cols: usize, scale: f64) -> SynthModality {
    SynthModality {
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
    }
}

fn main() -> gsabt::Result<()> {
    // Four weeks of 30-minute steps: two for training, one each for val/test.
    let parts = synth_generate(&[grid("taxi", 3, 4, 100.0), grid("bike", 3, 3, 20.0)], 28, 11)?;
    let data = Dataset::prepare(&parts, 12, 12, SplitBounds::weeks(2, 1, 1, STEPS_PER_DAY), NormKind::MinMax)?;
    println!(
        "{} nodes, {} train / {} val / {} test windows",
        data.graph.node_count(),
        data.windows.len(Split::Train),
        data.windows.len(Split::Val),
        data.windows.len(Split::Test)
    );

    let config = ModelConfig {
        modalities: ModalityShape::from_graph(&data.graph),
        d_h: 16,
        d_f: Some(4),
        top_u: 8,
        ..ModelConfig::default()
    };
    let model = Model::new(config)?;
    println!("{} parameters", model.param_count());

    let budget = TrainConfig {
        epochs: 8,
        learning_rate: 2e-3,
        window_stride: 2,
        ..TrainConfig::default()
    };
    let out = train(model, &data, &budget)?;
    for r in &out.history {
        println!(
            "epoch {:>2}  train {:.4}  val {:.4}  {} ms",
            r.epoch,
            r.train_mae,
            r.val_mae.unwrap_or(f64::NAN),
            r.wall_ms
        );
    }
    println!("best epoch {}\n", out.best_epoch);
    println!("model\n{}\n", evaluate(&out.best, &data, Split::Test)?);
    println!("historical average\n{}", historical_average(&data, Split::Test)?);
    Ok(())
}
