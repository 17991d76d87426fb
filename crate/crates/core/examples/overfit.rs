//! Memorise eight training windows: a small model driven to near-zero
//! training error, plus a zero-learning-rate control whose loss stays flat.
//!
//! cargo run --release --example overfit

use gsabt::data::{synth_generate, Dataset, NormKind, Split, SplitBounds, SynthModality};
use gsabt::model::{ModalityShape, Model, ModelConfig};
use gsabt::train::{evaluate, predict_split, train, TrainConfig};

fn main() -> gsabt::Result<()> {
    let modality = |name: &str, rows, cols, scale| SynthModality {
        name: name.into(),
        rows,
        cols,
        features: 1,
        scale,
        base: 1.0,
        daily_amp: 0.5,
        half_day_amp: 0.2,
        coupling: 0.5,
        noise: 0.1,
    };
    let parts = synth_generate(&[modality("taxi", 2, 3, 50.0), modality("bike", 2, 2, 10.0)], 1, 3)?;
    // 15 steps with P = Q = 4 hold exactly eight windows.
    let data = Dataset::prepare(&parts, 4, 4, SplitBounds::train_only(15), NormKind::MinMax)?;
    assert_eq!(data.windows.len(Split::Train), 8);

    let config = ModelConfig {
        input_len: 4,
        horizon: 4,
        modalities: ModalityShape::from_graph(&data.graph),
        d_h: 8,
        d_f: Some(4),
        st_layers: 1,
        top_u: 4,
        dropout: 0.0,
        seed: 1,
        ..ModelConfig::default()
    };
    let budget = TrainConfig {
        epochs: 500,
        batch_size: 8,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let out = train(Model::new(config.clone())?, &data, &budget)?;
    for r in out.history.iter().step_by(50).chain(out.history.last()) {
        println!("epoch {:>3}  train MAE {:.5}", r.epoch, r.train_mae);
    }
    let all: Vec<usize> = (0..8).collect();
    let (p, y) = predict_split(&out.best, &data, Split::Train, &all, 8)?;
    let mae = p.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
    println!("final normalised train MAE {mae:.5} after {:.1?}", start.elapsed());
    println!("{}", evaluate(&out.best, &data, Split::Train)?);

    let control = train(
        Model::new(config)?,
        &data,
        &TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..budget
        },
    )?;
    let losses: Vec<f64> = control.history.iter().map(|r| r.train_mae).collect();
    println!("lr = 0 control losses: {losses:?}");
    Ok(())
}
