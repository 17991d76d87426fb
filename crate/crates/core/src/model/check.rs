use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModalityShape, ModelConfig};
use super::forward::Model;
use crate::data::{extend_graphs, Adjacency, ModalitySpec, MultimodalGraph};
use crate::error::Result;
use crate::tensor::{grad_check, GradCheckOptions, GradCheckReport, Tensor};

/// Finite-difference check of the MAE loss gradient with respect to every
/// parameter, in evaluation mode.
pub fn check_gradients(
    model: &Model,
    x: &Tensor,
    target: &Tensor,
    graph: &MultimodalGraph,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut inputs = Vec::new();
    model.params.visit(|name, t| inputs.push((name, t.clone())));
    let template = model.params.clone();
    grad_check(
        |tape, vars| {
            let mut it = vars.iter().copied();
            let p = template.map(|_| it.next().expect("one var per tensor"));
            let xv = tape.constant(x.clone());
            let (pred, _) = model.forward_vars(tape, xv, &p, graph, false, &mut ChaCha8Rng::seed_from_u64(0))?;
            tape.mae_loss(pred, target)
        },
        &inputs,
        opts,
    )
}

/// Largest relative error per block (`embed`, `layer{l}.spatial`,
/// `layer{l}.temporal`, `head`), in census order.
pub fn block_summary(report: &GradCheckReport) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for e in &report.entries {
        let mut parts = e.name.split('.');
        let first = parts.next().unwrap_or_default();
        let block = if first.starts_with("layer") {
            format!("{first}.{}", parts.next().unwrap_or_default())
        } else {
            first.to_string()
        };
        match out.last_mut() {
            Some((b, v)) if *b == block => *v = v.max(e.max_rel_err),
            _ => out.push((block, e.max_rel_err)),
        }
    }
    out
}

/// A small model with path-graph modalities, random inputs and targets.
#[derive(Clone, Debug)]
pub struct MicroInstance {
    pub model: Model,
    pub graph: MultimodalGraph,
    pub x: Tensor,
    pub target: Tensor,
}

fn path_graph(n: usize) -> Adjacency {
    let mut data = vec![0u8; n * n];
    for i in 1..n {
        data[(i - 1) * n + i] = 1;
        data[i * n + i - 1] = 1;
    }
    Adjacency::new(n, data).expect("valid path graph")
}

/// Builds a micro-instance: one path graph per entry of `nodes`, the model
/// settings of `base` (modalities and features are replaced), two samples,
/// and inputs, targets and weights drawn from `seed`.
pub fn micro_instance(base: &ModelConfig, nodes: &[usize], seed: u64) -> Result<MicroInstance> {
    let specs: Vec<ModalitySpec> = nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| ModalitySpec::new(format!("m{i}"), 1, path_graph(n)))
        .collect::<Result<_>>()?;
    let graph = extend_graphs(&specs)?;
    let config = ModelConfig {
        modalities: ModalityShape::from_graph(&graph),
        features: 1,
        seed,
        ..base.clone()
    };
    let model = Model::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = graph.node_count();
    let x = Tensor::uniform(&[2, base.input_len, n, 1], -1.0, 1.0, &mut rng);
    let target = Tensor::uniform(&[2, base.horizon, n, 1], -1.0, 1.0, &mut rng);
    Ok(MicroInstance { model, graph, x, target })
}
