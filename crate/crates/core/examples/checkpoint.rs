//! On-disk formats: write a dataset (series, adjacency, manifest) and a model
//! checkpoint, read them back and confirm nothing changed.
//!
//! cargo run --example checkpoint

use gsabt::data::io::{load_graph, load_series, save_graph, save_series, Manifest, ManifestEntry};
use gsabt::data::{synth_generate, SynthModality};
use gsabt::model::{load_checkpoint, save_checkpoint, ModalityShape, Model, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("gsabt-checkpoint-example");
    std::fs::create_dir_all(&dir)?;

    let spec = SynthModality {
        name: "taxi".into(),
        rows: 2,
        cols: 3,
        features: 1,
        scale: 50.0,
        base: 1.0,
        daily_amp: 0.5,
        half_day_amp: 0.2,
        coupling: 0.0,
        noise: 0.1,
    };
    let parts = synth_generate(&[spec], 2, 1)?;
    let (modality, series) = &parts[0];
    save_series(series, &dir.join("taxi.gstd"))?;
    save_graph(&modality.adjacency, &dir.join("taxi.gadj"))?;
    let manifest = Manifest {
        modalities: vec![ManifestEntry {
            name: "taxi".into(),
            node_count: modality.node_count(),
            features: vec!["flow".into()],
            series: "taxi.gstd".into(),
            graph: "taxi.gadj".into(),
        }],
    };
    manifest.write(&dir.join("manifest.toml"))?;
    assert_eq!(&load_series(&dir.join("taxi.gstd"))?, series);
    assert_eq!(load_graph(&dir.join("taxi.gadj"))?, modality.adjacency);
    let loaded = Manifest::read(&dir.join("manifest.toml"))?.load(&dir)?;
    println!("series checksum {} ({} steps), reloaded identically", series.checksum(), loaded[0].1.steps());

    let model = Model::new(ModelConfig {
        modalities: vec![ModalityShape {
            name: "taxi".into(),
            nodes: 6,
        }],
        d_h: 8,
        top_u: 4,
        seed: 3,
        ..ModelConfig::default()
    })?;
    let path = dir.join("model.gsab");
    save_checkpoint(&model, &path)?;
    let back = load_checkpoint(&path)?;
    assert_eq!(back.params, model.params);
    assert_eq!(back.config, model.config);
    let bytes = std::fs::metadata(&path)?.len();
    println!("{} parameters, checkpoint {bytes} bytes at {}", model.param_count(), path.display());
    Ok(())
}
