//! Acceptance suite: runs every criterion in order and prints one PASS/FAIL
//! line per criterion. Exits non-zero if any criterion fails.
//!
//! cargo test --release --test acceptance
//! ACCEPTANCE_ONLY=3,9 cargo test --release --test acceptance

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsabt::data::{
    extend_graphs, synth_generate, Adjacency, Dataset, ModalitySpec, NormKind, Split, SplitBounds, SynthModality,
};
use gsabt::model::{Ablation, ModalityShape, Model, ModelConfig};
use gsabt::spatial::{
    attention_scores, gsa_forward, sparse_global, top_u_sparsify, GraphAttentionVariant, SpatialConfig, SpatialParams,
};
use gsabt::temporal::{bitcn_forward, stcn_forward, BitcnParams, StcnParams, TemporalConfig};
use gsabt::train::{
    attention_census, metrics, pearson, predict_split, run_ablation_suite, run_joint_vs_single, train,
    write_history_csv, write_variant_table, TrainConfig,
};
use gsabt::{Tape, Tensor};

type Outcome = Result<String, String>;
type Criterion = Box<dyn FnOnce(&mut Option<Desk>) -> Outcome>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn work_dir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn cli(args: &[&str]) -> i32 {
    let mut v = vec!["gsabt"];
    v.extend_from_slice(args);
    gsabt::cli::run(v)
}

// 1 ------------------------------------------------------------------------

fn gradient_fidelity() -> Outcome {
    let dir = work_dir("gradcheck");
    let t = Instant::now();
    let code = cli(&["gradcheck", "--out", dir.to_str().unwrap()]);
    let secs = t.elapsed().as_secs_f64();
    ensure(code == 0, || format!("gradcheck exited with {code}"))?;
    let text = fs::read_to_string(dir.join("gradcheck.txt")).map_err(|e| e.to_string())?;
    let line = text
        .lines()
        .find(|l| l.starts_with("max relative error"))
        .ok_or("no summary line")?;
    let err: f64 = line.split_whitespace().nth(3).ok_or("bad summary")?.parse().map_err(|e| format!("{e}"))?;
    for block in ["embed", "layer0.spatial", "layer0.temporal", "head"] {
        ensure(text.contains(block), || format!("block {block} missing from report"))?;
    }
    ensure(err <= 1e-4, || format!("max relative error {err:e}"))?;
    ensure(secs <= 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("max rel err {err:.2e} over every parameter, {secs:.1}s"))
}

// 2 ------------------------------------------------------------------------

fn top_u_reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b = rng.random_range(1..4);
        let n = rng.random_range(2..14);
        let d = rng.random_range(1..6);
        let q = Tensor::uniform(&[b, n, d], -2.0, 2.0, &mut rng);
        let k = Tensor::uniform(&[b, n, d], -2.0, 2.0, &mut rng);
        let v = Tensor::uniform(&[b, n, 3], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.constant(q), tape.constant(k), tape.constant(v));
        let s = attention_scores(&mut tape, qv, kv, d).map_err(|e| e.to_string())?;
        let dense_w = tape.softmax_rows(s).map_err(|e| e.to_string())?;
        let dense = tape.matmul(dense_w, vv).map_err(|e| e.to_string())?;

        let (full, _) = top_u_sparsify(&mut tape, s, n + rng.random_range(0..3)).map_err(|e| e.to_string())?;
        let sparse = sparse_global(&mut tape, full, vv).map_err(|e| e.to_string())?;
        worst = worst.max(tape.value(sparse).max_abs_diff(tape.value(dense)));

        let u = rng.random_range(1..n + 2);
        for (uu, one_hot) in [(u, false), (1, true)] {
            let (m, _) = top_u_sparsify(&mut tape, s, uu).map_err(|e| e.to_string())?;
            let w = tape.softmax_rows(m).map_err(|e| e.to_string())?;
            for row in tape.value(w).data().chunks(n) {
                let nz = row.iter().filter(|&&x| x != 0.0).count();
                ensure(nz == uu.min(n), || format!("U={uu}, N={n}: {nz} nonzeros"))?;
                if one_hot {
                    ensure(row.iter().filter(|&&x| x == 1.0).count() == 1, || format!("row {row:?} is not one-hot"))?;
                }
            }
        }
    }
    ensure(worst <= 1e-10, || format!("U >= N differs from dense by {worst:e}"))?;
    Ok(format!("100 instances, U>=N max diff {worst:.1e}, U=1 one-hot, min(U,N) nonzeros"))
}

// 3 ------------------------------------------------------------------------

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Adjacency {
    let mut data = vec![0u8; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.4) {
                data[i * n + j] = 1;
                data[j * n + i] = 1;
            }
        }
    }
    Adjacency::new(n, data).unwrap()
}

fn locality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0usize;
    for case in 0..20 {
        let m = rng.random_range(2..5);
        let sizes: Vec<usize> = (0..m).map(|_| rng.random_range(1..6)).collect();
        let specs: Vec<ModalitySpec> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| ModalitySpec::new(format!("m{i}"), 1, random_graph(n, &mut rng)).unwrap())
            .collect();
        let graph = extend_graphs(&specs).map_err(|e| e.to_string())?;
        let n = graph.node_count();
        let target = rng.random_range(0..m);
        let others: Vec<usize> = (0..n).filter(|&i| graph.modality_of(i) != target).collect();
        // The literal elementwise-product variant normalises over every node
        // and is not local by construction.
        let variant = GraphAttentionVariant::MaskedSoftmax;

        // Spatial block alone.
        let (d_in, d_h, b) = (rng.random_range(2..7), rng.random_range(2..6), rng.random_range(1..3));
        let mut params = SpatialParams::zeros(d_in, d_h);
        for t in params.fields_mut() {
            *t = Tensor::uniform(t.shape(), -0.8, 0.8, &mut rng);
        }
        let cfg = SpatialConfig {
            no_sa: true,
            no_astar: rng.random_bool(0.3),
            variant,
            ..SpatialConfig::new(d_h, rng.random_range(1..n + 1))
        };
        let x = Tensor::uniform(&[b, n, d_in], -1.0, 1.0, &mut rng);
        let mut x2 = x.clone();
        for bi in 0..b {
            for i in graph.range(target) {
                for f in 0..d_in {
                    x2.set(&[bi, i, f], x.get(&[bi, i, f]) + rng.random_range(0.1..2.0));
                }
            }
        }
        let run = |x: &Tensor| -> Tensor {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let pv = params.register(&mut tape);
            let (o, _) = gsa_forward(&mut tape, xv, &pv, &graph, &cfg).unwrap();
            tape.value(o).clone()
        };
        let (y, y2) = (run(&x), run(&x2));
        for bi in 0..b {
            for &i in &others {
                for f in 0..d_in {
                    ensure(y.get(&[bi, i, f]) == y2.get(&[bi, i, f]), || {
                        format!("case {case}: spatial output at node {i} changed")
                    })?;
                    checked += 1;
                }
            }
        }

        // Whole model with node-local temporal stacks.
        let d_f = rng.random_range(1..3);
        let p = rng.random_range(2..6);
        let config = ModelConfig {
            input_len: p,
            horizon: rng.random_range(1..4),
            modalities: ModalityShape::from_graph(&graph),
            d_h,
            d_f: Some(d_f),
            st_layers: rng.random_range(1..3),
            top_u: rng.random_range(1..n + 1),
            dropout: 0.0,
            ablation: Ablation { no_sa: true, no_astar: cfg.no_astar, ..Ablation::default() },
            graph_attention: variant,
            seed: case,
            ..ModelConfig::default()
        };
        let mut model = Model::new(config.clone()).map_err(|e| e.to_string())?;
        for layer in &mut model.params.layers {
            let c = n * d_f;
            layer.temporal.shared = BitcnParams { forward: StcnParams::identity(c), backward: StcnParams::identity(c) };
            for (u, &sz) in layer.temporal.unique.iter_mut().zip(&sizes) {
                let c = sz * d_f;
                *u = BitcnParams { forward: StcnParams::identity(c), backward: StcnParams::identity(c) };
            }
        }
        let x = Tensor::uniform(&[2, p, n, 1], -1.0, 1.0, &mut rng);
        let mut x2 = x.clone();
        for bi in 0..2 {
            for t in 0..p {
                for i in graph.range(target) {
                    x2.set(&[bi, t, i, 0], x.get(&[bi, t, i, 0]) + rng.random_range(0.1..2.0));
                }
            }
        }
        let y = model.predict(&x, &graph).map_err(|e| e.to_string())?;
        let y2 = model.predict(&x2, &graph).map_err(|e| e.to_string())?;
        for bi in 0..2 {
            for q in 0..config.horizon {
                for &i in &others {
                    ensure(y.get(&[bi, q, i, 0]) == y2.get(&[bi, q, i, 0]), || {
                        format!("case {case}: model output at node {i} changed")
                    })?;
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("20 configurations, {checked} outputs exactly unchanged"))
}

// 4 ------------------------------------------------------------------------

fn support(f: &dyn Fn(&Tensor) -> Tensor, p: usize) -> Vec<Vec<usize>> {
    let x = Tensor::full(&[1, 1, p], 0.5);
    let y = f(&x);
    let mut deps = vec![Vec::new(); p];
    for s in 0..p {
        let mut x2 = x.clone();
        x2.set(&[0, 0, s], 1.5);
        let y2 = f(&x2);
        for (t, d) in deps.iter_mut().enumerate() {
            if y.get(&[0, 0, t]) != y2.get(&[0, 0, t]) {
                d.push(s);
            }
        }
    }
    deps
}

fn receptive_field() -> Outcome {
    const P: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut p = BitcnParams::zeros(1);
    for s in [&mut p.forward, &mut p.backward] {
        for (w, b) in &mut s.layers {
            *w = Tensor::uniform(w.shape(), 0.2, 1.0, &mut rng);
            *b = Tensor::uniform(b.shape(), 0.0, 0.1, &mut rng);
        }
    }
    fn stcn(params: &StcnParams<Tensor>, flip: bool) -> impl Fn(&Tensor) -> Tensor + '_ {
        move |x: &Tensor| -> Tensor {
            let mut tape = Tape::new();
            let mut v = tape.constant(x.clone());
            if flip {
                v = tape.flip(v, 2).unwrap();
            }
            let pv = params.try_map(&mut |t| Ok(tape.constant(t.clone()))).unwrap();
            let mut y = stcn_forward(&mut tape, v, &pv, 0.0, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            if flip {
                y = tape.flip(y, 2).unwrap();
            }
            tape.value(y).clone()
        }
    }
    let fwd = support(&stcn(&p.forward, false), P);
    let bwd = support(&stcn(&p.backward, true), P);
    let bi = support(
        &|x: &Tensor| {
            let mut tape = Tape::new();
            let v = tape.constant(x.clone());
            let pv = p.try_map(&mut |t| Ok(tape.constant(t.clone()))).unwrap();
            let y = bitcn_forward(&mut tape, v, &pv, &TemporalConfig::eval(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            tape.value(y).clone()
        },
        P,
    );
    for t in 0..P {
        let past: Vec<usize> = (t.saturating_sub(11)..=t).collect();
        let future: Vec<usize> = (t..=(t + 11).min(P - 1)).collect();
        ensure(fwd[t] == past, || format!("forward support at t={t}: {:?}", fwd[t]))?;
        ensure(bwd[t] == future, || format!("backward support at t={t}: {:?}", bwd[t]))?;
        let both: Vec<usize> = (t.saturating_sub(11)..=(t + 11).min(P - 1)).collect();
        ensure(bi[t] == both, || format!("bidirectional support at t={t}: {:?}", bi[t]))?;
    }
    ensure(fwd[P - 1].len() == 12, || "last step does not see 12 steps".into())?;
    let full: Vec<usize> = (0..P).collect();
    let covering = (0..P).filter(|&t| bi[t] == full).count();
    ensure(covering > 0, || "no output covers every timestep".into())?;
    Ok(format!(
        "forward support {}..={} at t=15 (12 steps), backward mirrors, {covering} bidirectional outputs cover all 16 steps",
        fwd[P - 1][0],
        P - 1
    ))
}

// 5 ------------------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..300);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let m = metrics(&a, &b).map_err(|e| e.to_string())?;
        let (mut abs, mut sq, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            abs += (b[i] - a[i]).abs();
            sq += (b[i] - a[i]) * (b[i] - a[i]);
            sa += a[i];
            sb += b[i];
        }
        let (ma, mb) = (sa / n as f64, sb / n as f64);
        let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
        for i in 0..n {
            num += (a[i] - ma) * (b[i] - mb);
            va += (a[i] - ma) * (a[i] - ma);
            vb += (b[i] - mb) * (b[i] - mb);
        }
        let pcc = m.pcc.ok_or("undefined pcc on random data")?;
        worst = worst
            .max((m.mae - abs / n as f64).abs())
            .max((m.rmse - (sq / n as f64).sqrt()).abs())
            .max((pcc - num / (va * vb).sqrt()).abs());

        let c = rng.random_range(-100.0..100.0);
        let neg: Vec<f64> = a.iter().map(|v| -v + c).collect();
        ensure(pearson(&a, &a) == Some(1.0), || format!("PCC(y, y) = {:?}", pearson(&a, &a)))?;
        ensure(pearson(&a, &neg) == Some(-1.0), || format!("PCC(y, -y + c) = {:?}", pearson(&a, &neg)))?;
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    ensure(metrics(&[1.0, 2.0], &[3.0, 3.0]).unwrap().pcc.is_none(), || "constant series PCC".into())?;
    Ok(format!("1000 vectors, max deviation {worst:.1e}; PCC(y,y)=1 and PCC(y,-y+c)=-1 exactly"))
}

// 6 ------------------------------------------------------------------------

fn synth(name: &str, rows: usize, cols: usize, scale: f64, coupling: f64) -> SynthModality {
    SynthModality {
        name: name.into(),
        rows,
        cols,
        features: 1,
        scale,
        base: 1.0,
        daily_amp: 0.5,
        half_day_amp: 0.2,
        coupling,
        noise: 0.1,
    }
}

fn overfit() -> Outcome {
    let t = Instant::now();
    let parts = synth_generate(&[synth("taxi", 2, 3, 50.0, 0.5), synth("bike", 2, 2, 10.0, 0.5)], 1, 3)
        .map_err(|e| e.to_string())?;
    let data = Dataset::prepare(&parts, 4, 4, SplitBounds::train_only(15), NormKind::MinMax).map_err(|e| e.to_string())?;
    ensure(data.windows.len(Split::Train) == 8, || "expected 8 samples".into())?;
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
    let budget = TrainConfig { epochs: 500, batch_size: 8, learning_rate: 3e-3, ..TrainConfig::default() };
    let out = train(Model::new(config.clone()).map_err(|e| e.to_string())?, &data, &budget).map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..8).collect();
    let (p, y) = predict_split(&out.best, &data, Split::Train, &all, 8).map_err(|e| e.to_string())?;
    let mae = p.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
    let best_epoch = out.best_epoch;
    ensure(mae < 0.02, || format!("train MAE {mae:.4} after 500 epochs"))?;

    let control = train(
        Model::new(config).map_err(|e| e.to_string())?,
        &data,
        &TrainConfig { learning_rate: 0.0, epochs: 20, ..budget },
    )
    .map_err(|e| e.to_string())?;
    let first = control.history[0].train_mae;
    ensure(control.history.iter().all(|r| r.train_mae == first), || "lr=0 loss drifted".into())?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.0}s"))?;
    Ok(format!("train MAE {mae:.4} (best epoch {best_epoch}), lr=0 loss constant at {first:.4}, {secs:.1}s"))
}

// 7, 8 ---------------------------------------------------------------------

struct Desk {
    dir: PathBuf,
    joint_model: Model,
    data: Dataset,
}

fn desk_parts() -> Vec<(ModalitySpec, gsabt::data::Series)> {
    synth_generate(&[synth("taxi", 4, 6, 100.0, 0.4), synth("bike", 4, 4, 20.0, 0.4)], 91, 7).unwrap()
}

fn desk_model() -> ModelConfig {
    ModelConfig { d_h: 16, d_f: Some(4), head_hidden: Some(64), st_layers: 2, top_u: 16, ..ModelConfig::default() }
}

fn desk_budget() -> TrainConfig {
    TrainConfig { epochs: 10, learning_rate: 2e-3, window_stride: 4, val_stride: 4, seed: 7, ..TrainConfig::default() }
}

fn strip_wall(h: &[gsabt::train::EpochRecord]) -> Vec<(usize, f64, Option<f64>)> {
    h.iter().map(|r| (r.epoch, r.train_mae, r.val_mae)).collect()
}

fn desk_experiment(state: &mut Option<Desk>) -> Outcome {
    let t = Instant::now();
    let dir = work_dir("desk");
    let parts = desk_parts();
    let steps = parts[0].1.steps();
    ensure(steps == 13 * 7 * 48, || format!("{steps} steps"))?;
    let bounds = SplitBounds::weeks(9, 2, 2, 48);
    let base = desk_model();
    let budget = desk_budget();

    let cmp = run_joint_vs_single(&parts, &base, &budget, bounds.clone(), NormKind::MinMax).map_err(|e| e.to_string())?;
    cmp.write_csv(fs::File::create(dir.join("comparison.csv")).unwrap()).map_err(|e| e.to_string())?;
    let data = Dataset::prepare(&parts, 12, 12, bounds.clone(), NormKind::MinMax).map_err(|e| e.to_string())?;
    let runs = run_ablation_suite(&base, &budget, &data).map_err(|e| e.to_string())?;
    write_variant_table(&runs, fs::File::create(dir.join("ablation.csv")).unwrap()).map_err(|e| e.to_string())?;
    write_history_csv(&cmp.joint.outcome.history, fs::File::create(dir.join("joint_history.csv")).unwrap())
        .map_err(|e| e.to_string())?;

    let all = std::iter::once(&cmp.joint).chain(&cmp.single).chain(&runs);
    for r in all {
        ensure(r.report.is_finite(), || format!("{} report not finite", r.label))?;
        ensure(r.outcome.history.iter().all(|h| h.train_mae.is_finite()), || format!("{} history", r.label))?;
    }
    let lines = fs::read_to_string(dir.join("ablation.csv")).unwrap().lines().count();
    ensure(lines == 7, || format!("ablation CSV has {lines} lines"))?;
    ensure(runs[0].report == cmp.joint.report, || "full ablation row differs from the joint run".into())?;

    // Determinism: repeat one single-modality run.
    let bike = Dataset::prepare(&parts[1..], 12, 12, bounds, NormKind::MinMax).map_err(|e| e.to_string())?;
    let cfg = ModelConfig { top_u: 16, ..base };
    let again = gsabt::train::train_and_evaluate("bike", &cfg, &budget, &bike, Split::Test).map_err(|e| e.to_string())?;
    let first = cmp.single.iter().find(|r| r.label == "bike").ok_or("no bike run")?;
    ensure(again.report == first.report, || "repeat run report differs".into())?;
    ensure(strip_wall(&again.outcome.history) == strip_wall(&first.outcome.history), || "repeat history differs".into())?;
    ensure(again.outcome.best.params == first.outcome.best.params, || "repeat parameters differ".into())?;

    let wins = cmp.joint_wins();
    println!("    joint vs single test MAE (full-scale expectation: joint training helps every modality):");
    for (name, m) in cmp.joint.report.modalities() {
        let s = cmp.single.iter().find_map(|r| r.report.get(name)).unwrap();
        println!("      {name:<5} joint {:.4}  single {:.4}  {}", m.mae, s.mae, if m.mae < s.mae { "joint better" } else { "single better" });
    }
    let full = runs[0].report.overall().mae;
    println!("    ablations, overall test MAE (full-scale expectation: full model best on every metric):");
    for r in &runs {
        println!("      {:<9} {:.4}{}", r.label, r.report.overall().mae, if r.report.overall().mae < full { "  (beats full)" } else { "" });
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs <= 1800.0, || format!("took {secs:.0}s"))?;
    *state = Some(Desk { dir: dir.clone(), joint_model: cmp.joint.outcome.best.clone(), data });
    Ok(format!(
        "9 runs finite, repeat bit-identical, joint better on {}/{} modalities, CSVs in {}, {secs:.0}s",
        wins.len(),
        cmp.joint.report.modalities().count(),
        dir.display()
    ))
}

fn census(state: &Option<Desk>) -> Outcome {
    let desk = state.as_ref().ok_or("desk experiment did not complete")?;
    let c = attention_census(&desk.joint_model, &desk.data, Split::Test).map_err(|e| e.to_string())?;
    c.write_csv(fs::File::create(desk.dir.join("census.csv")).unwrap()).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for (t, name) in c.names.iter().enumerate() {
        let p = c.proportions(t);
        let sum: f64 = p.iter().sum();
        ensure((sum - 100.0).abs() <= 0.1, || format!("{name}: proportions sum to {sum}"))?;
        summary.push(format!("{name}<-[{}]", p.iter().map(|v| format!("{v:.1}%")).collect::<Vec<_>>().join(" ")));
    }
    ensure(c.intra() > 0 && c.cross() > 0, || format!("intra {} cross {}", c.intra(), c.cross()))?;
    Ok(format!("intra {} cross {}; {}", c.intra(), c.cross(), summary.join(", ")))
}

// 9 ------------------------------------------------------------------------

/// Artifacts of one output directory, with timing fields removed.
fn artifacts(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let bytes = fs::read(&p).unwrap();
        let content = match name.as_str() {
            "history.csv" => String::from_utf8(bytes)
                .unwrap()
                .lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                .collect::<Vec<_>>()
                .join("\n"),
            "run_manifest.toml" => {
                let mut t: toml::Table = toml::from_str(&String::from_utf8(bytes).unwrap()).unwrap();
                t.remove("timings");
                // Output paths name the directory; history digests include wall-clock time.
                let outs = t.remove("outputs").unwrap_or(toml::Value::Array(vec![]));
                let digests: Vec<String> = outs
                    .as_array()
                    .unwrap()
                    .iter()
                    .filter(|o| !o["path"].as_str().unwrap().ends_with("history.csv"))
                    .map(|o| o["sha256"].as_str().unwrap().to_string())
                    .collect();
                format!("{t}\n{digests:?}")
            }
            _ => format!("{:x?}", sha(&bytes)),
        };
        out.insert(name, content);
    }
    out
}

fn sha(bytes: &[u8]) -> Vec<u8> {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).to_vec()
}

fn reproducibility() -> Outcome {
    let root = work_dir("repro");
    let data = root.join("data");
    let cfg = root.join("config.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 5\n[data]\nmanifest = {:?}\ntrain_weeks = 1\nval_weeks = 1\ntest_weeks = 1\n\
             [generate]\ndays = 21\n[model]\nd_h = 8\nd_f = 2\nst_layers = 1\ntop_u = 8\n\
             [train]\nepochs = 2\nwindow_stride = 16\nval_stride = 8\n",
            data.join("manifest.toml")
        ),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let d = data.to_str().unwrap();
    let a = |n: &str| root.join(n).to_string_lossy().to_string();
    let ckpt = root.join("train/model.gsab").to_string_lossy().to_string();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("generate", vec!["generate".into(), "--config".into(), c.into(), "--out".into(), d.into()]),
        ("train", vec!["train".into(), "--config".into(), c.into(), "--out".into(), a("train")]),
        ("eval", vec!["eval".into(), "--config".into(), c.into(), "--out".into(), a("eval"), "--checkpoint".into(), ckpt.clone()]),
        ("census", vec!["census".into(), "--config".into(), c.into(), "--out".into(), a("census"), "--checkpoint".into(), ckpt]),
        ("ablate", vec!["ablate".into(), "--config".into(), c.into(), "--out".into(), a("ablate"), "--override".into(), "train.epochs=1".into()]),
        ("sweep", vec!["sweep".into(), "--config".into(), c.into(), "--out".into(), a("sweep"), "--param".into(), "st_layers".into(), "--override".into(), "train.epochs=1".into()]),
        ("compare", vec!["compare".into(), "--config".into(), c.into(), "--out".into(), a("compare")]),
        ("gradcheck", vec!["gradcheck".into(), "--config".into(), c.into(), "--out".into(), a("gradcheck")]),
    ];
    let mut compared = 0;
    for (name, args) in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let code = cli(&args);
        ensure(code == 0, || format!("{name} exited with {code}"))?;
        let out = PathBuf::from(args[args.iter().position(|&s| s == "--out").unwrap() + 1]);
        let replay = root.join(format!("{name}_replay"));
        let manifest = out.join("run_manifest.toml");
        let code = cli(&[args[0], "--config", manifest.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
        ensure(code == 0, || format!("{name} replay exited with {code}"))?;
        let (x, y) = (artifacts(&out), artifacts(&replay));
        ensure(x.keys().eq(y.keys()), || format!("{name}: artifact sets differ"))?;
        for (k, v) in &x {
            ensure(&y[k] == v, || format!("{name}: {k} differs on replay"))?;
            compared += 1;
        }
    }
    Ok(format!("8 commands replayed from their manifests, {compared} artifacts identical"))
}

fn main() {
    let mut desk = None;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 gradient fidelity", Box::new(|_| gradient_fidelity())),
        ("2 Top-U reductions", Box::new(|_| top_u_reductions())),
        ("3 modality locality", Box::new(|_| locality())),
        ("4 receptive field", Box::new(|_| receptive_field())),
        ("5 metric oracles", Box::new(|_| metric_oracles())),
        ("6 overfit check", Box::new(|_| overfit())),
        ("7 desk experiment", Box::new(desk_experiment)),
        ("8 attention census", Box::new(|s| census(s))),
        ("9 reproducibility", Box::new(|_| reproducibility())),
    ];
    // ACCEPTANCE_ONLY=3,9 runs a subset.
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let mut failed = 0;
    for (name, f) in criteria {
        let number = name.split(' ').next().unwrap();
        if only.as_ref().is_some_and(|o| !o.iter().any(|n| n == number)) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| f(&mut desk))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
