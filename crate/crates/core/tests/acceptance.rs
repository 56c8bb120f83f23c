//! Acceptance suite. Runs without the libtest harness so each criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hybridnas_core::cost::{count_macs, count_params, estimate_ram, node_macs, node_params, DeploymentAssumptions};
use hybridnas_core::graph::{build_graph, infer_shapes, GraphBuilder, NetworkGraph, OpKind, TensorShape};
use hybridnas_core::kernels::{
    attention_weights, batchnorm_eval, conv2d, fold_batchnorm, mhsa_linear, mhsa_linear_ordered, mhsa_softmax,
    network_forward, pool, AssociationOrder, BatchNormParams, ConvParams, FeatureMap, MhsaParams, NetworkParams,
    OpCounter,
};
use hybridnas_core::report::{write_outputs, ScatterAxes};
use hybridnas_core::search::{
    dominates, pareto_front, run_search, BuiltinEvaluator, Direction, SearchConfig, SearchHistory,
};
use hybridnas_core::searchspace::{
    ArchitectureDescriptor, AttnKind, CnnBlockKind, CnnBlockSpec, HybridVitBlockSpec, PoolKind, PoolingBlockSpec,
    SearchSpaceConfig, VitPrefix,
};
use ndarray::{Array, Array1, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform2(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn random_mhsa(rng: &mut ChaCha8Rng, d: usize, q: usize) -> MhsaParams {
    MhsaParams {
        w_q: uniform2(rng, (d, q)),
        w_k: uniform2(rng, (d, q)),
        w_v: uniform2(rng, (d, q)),
        w_a: uniform2(rng, (q, d)),
    }
}

fn mac_param_oracle() -> Outcome {
    let started = Instant::now();
    let space = SearchSpaceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total_macs = 0u64;
    for i in 0..200 {
        let (arch, graph) = common::sample_valid(&space, &mut rng, space.max_params);
        let params = NetworkParams::init(&graph, i);
        let [c, h, w] = space.input_shape;
        let x = FeatureMap::from_shape_fn((c, h, w), |_| rng.gen_range(-1.0..1.0));
        let mut counter = OpCounter::new();
        let logits = network_forward(&graph, &params, &x, &mut counter).map_err(|e| format!("arch {i}: {e}"))?;
        ensure(logits.len() == space.num_classes, || format!("arch {i}: {} logits", logits.len()))?;
        for node in graph.nodes() {
            let analytic = node_macs(&graph, node.id);
            let counted = counter.node(node.id);
            ensure(analytic == counted, || {
                format!(
                    "arch {i} node {} {}: analytic {analytic} != counted {counted} ({arch:?})",
                    node.id,
                    node.op.name()
                )
            })?;
            let materialized = params.layers.get(&node.id).map_or(0, |l| l.trainable_len()) as u64;
            ensure(node_params(&node.op) == materialized, || {
                format!("arch {i} node {}: params {} != materialized {materialized}", node.id, node_params(&node.op))
            })?;
        }
        ensure(count_macs(&graph).0 == counter.total(), || format!("arch {i}: total MACs differ"))?;
        ensure(count_params(&graph).0 == params.trainable_len() as u64, || format!("arch {i}: total params differ"))?;
        total_macs += counter.total();
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("200 architectures, {total_macs} MACs counted, all nodes exact"))
}

fn attention_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_row = 0.0f64;
    let mut worst_order = 0.0f64;
    for _ in 0..100 {
        let heads = [1, 2, 4][rng.gen_range(0..3)];
        let q = heads * rng.gen_range(1..=8);
        let d = rng.gen_range(1..=24);
        let n = rng.gen_range(1..=40);
        let x = uniform2(&mut rng, (n, d));
        let p = random_mhsa(&mut rng, d, q);
        for m in attention_weights(&x, &p, heads).map_err(|e| e.to_string())? {
            for row in m.rows() {
                ensure(row.iter().all(|&v| v >= 0.0), || "negative attention weight".into())?;
                worst_row = worst_row.max((row.sum() - 1.0).abs());
            }
        }
        let f = mhsa_linear_ordered(&x, &p, heads, AssociationOrder::Factored, &mut OpCounter::new())
            .map_err(|e| e.to_string())?;
        let g = mhsa_linear_ordered(&x, &p, heads, AssociationOrder::Quadratic, &mut OpCounter::new())
            .map_err(|e| e.to_string())?;
        worst_order = worst_order.max(common::max_rel_err(&f, &g));
    }
    ensure(worst_row <= 1e-12, || format!("row sum error {worst_row:e}"))?;
    ensure(worst_order <= 1e-9, || format!("association-order error {worst_order:e}"))?;

    let p = random_mhsa(&mut rng, 16, 16);
    let zero = Array2::zeros((9, 16));
    let y = mhsa_linear(&zero, &p, 4, &mut OpCounter::new()).map_err(|e| e.to_string())?;
    ensure(y.iter().all(|&v| v == 0.0), || "linear MHSA of zero input is not zero".into())?;

    let mut worst_single = 0.0f64;
    for _ in 0..20 {
        let (d, heads) = (rng.gen_range(1..=16), [1, 2, 4][rng.gen_range(0..3)]);
        let q = heads * rng.gen_range(1..=6);
        let x = uniform2(&mut rng, (1, d));
        let p = random_mhsa(&mut rng, d, q);
        let y = mhsa_softmax(&x, &p, heads, &mut OpCounter::new()).map_err(|e| e.to_string())?;
        let v: Vec<f64> = (0..q).map(|j| (0..d).map(|t| x[[0, t]] * p.w_v[[t, j]]).sum()).collect();
        let expect: Vec<f64> = (0..d).map(|o| v.iter().enumerate().map(|(j, vj)| vj * p.w_a[[j, o]]).sum()).collect();
        worst_single = worst_single.max(common::max_rel_err(y.iter(), expect.iter()));
    }
    ensure(worst_single <= 1e-12, || format!("N=1 softmax MHSA deviates by {worst_single:e}"))?;
    Ok(format!("row-sum err {worst_row:.1e}, order err {worst_order:.1e}, zero->zero, N=1 err {worst_single:.1e}"))
}

fn attention_scaling() -> Outcome {
    let (d, q, heads) = (32usize, 32usize, 4usize);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_mhsa(&mut rng, d, q);
    let mut soft = Vec::new();
    let mut lin = Vec::new();
    for n in [16usize, 64, 256] {
        let x = uniform2(&mut rng, (n, d));
        let mut cs = OpCounter::new();
        mhsa_softmax(&x, &p, heads, &mut cs).map_err(|e| e.to_string())?;
        let mut cl = OpCounter::new();
        mhsa_linear(&x, &p, heads, &mut cl).map_err(|e| e.to_string())?;
        // Q, K, V and output projections: four (n x d) by (d x q)-sized products
        let projections = (4 * n * d * q) as u64;
        soft.push((cs.total(), cs.total() - projections));
        lin.push((cl.total(), cl.total() - projections));
    }
    for w in soft.windows(2) {
        ensure(w[1].1 == 16 * w[0].1, || format!("softmax score term {} -> {}", w[0].1, w[1].1))?;
    }
    for w in lin.windows(2) {
        ensure(w[1].1 == 4 * w[0].1, || format!("linear mixing term {} -> {}", w[0].1, w[1].1))?;
    }
    ensure(soft[1].0 == 524_288, || format!("softmax N=64 total {}", soft[1].0))?;
    ensure(lin[1].0 == 294_912, || format!("linear N=64 total {}", lin[1].0))?;
    Ok(format!(
        "softmax terms {:?} (x16), linear terms {:?} (x4), N=64 totals {} / {}",
        soft.iter().map(|s| s.1).collect::<Vec<_>>(),
        lin.iter().map(|s| s.1).collect::<Vec<_>>(),
        soft[1].0,
        lin[1].0
    ))
}

fn bn_fold() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let groups = [1, 2, 4][rng.gen_range(0..3)];
        let in_ch = groups * rng.gen_range(1..=4);
        let out_ch = groups * rng.gen_range(1..=4);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let stride = rng.gen_range(1..=2);
        let hw = rng.gen_range(k..=12);
        let x = Array::from_shape_fn((in_ch, hw, hw), |_| rng.gen_range(-1.0..1.0));
        let conv = ConvParams {
            weight: Array4::from_shape_fn((out_ch, in_ch / groups, k, k), |_| rng.gen_range(-1.0..1.0)),
            bias: rng.gen_bool(0.5).then(|| Array1::from_shape_fn(out_ch, |_| rng.gen_range(-1.0..1.0))),
        };
        let bn = BatchNormParams {
            gamma: Array1::from_shape_fn(out_ch, |_| rng.gen_range(0.1..3.0)),
            beta: Array1::from_shape_fn(out_ch, |_| rng.gen_range(-1.0..1.0)),
            running_mean: Array1::from_shape_fn(out_ch, |_| rng.gen_range(-1.0..1.0)),
            running_var: Array1::from_shape_fn(out_ch, |_| rng.gen_range(0.01..4.0)),
            eps: 1e-5,
        };
        let pad = k / 2;
        let reference = batchnorm_eval(
            &conv2d(&x, &conv, stride, pad, groups, &mut OpCounter::new()).map_err(|e| e.to_string())?,
            &bn,
        )
        .map_err(|e| e.to_string())?;
        let folded = fold_batchnorm(&conv, &bn).map_err(|e| e.to_string())?;
        let y = conv2d(&x, &folded, stride, pad, groups, &mut OpCounter::new()).map_err(|e| e.to_string())?;
        ensure(y.dim() == reference.dim(), || format!("pair {i}: shape mismatch"))?;
        worst = worst.max(common::max_rel_err(&y, &reference));
    }
    ensure(worst <= 1e-10, || format!("relative error {worst:e}"))?;
    Ok(format!("100 conv+BN pairs, max relative error {worst:.1e}"))
}

/// Quadratic (score and mixing) MACs of the single MHSA node: the node total
/// minus the four N·d·q projections, with N read from the node's input shape.
fn quadratic_term(graph: &NetworkGraph) -> Result<u64, String> {
    let node = graph.nodes().iter().find(|n| matches!(n.op, OpKind::Mhsa { .. })).ok_or("no MHSA node")?;
    let OpKind::Mhsa { d_model, qkv_dim, .. } = node.op else { unreachable!() };
    let n = graph.shape(node.inputs[0]).tokens();
    Ok(node_macs(graph, node.id) - (4 * n * d_model * qkv_dim) as u64)
}

fn random_pool_vit_pair(rng: &mut ChaCha8Rng, space: &SearchSpaceConfig) -> Result<(u64, u64), String> {
    let cnn: Vec<CnnBlockSpec> = (0..rng.gen_range(1..=2))
        .map(|_| CnnBlockSpec {
            kind: [CnnBlockKind::Residual, CnnBlockKind::Bottleneck, CnnBlockKind::InvertedBottleneck]
                [rng.gen_range(0..3)],
            kernel: 3,
            stride: 1,
            out_channels: [8, 16, 32][rng.gen_range(0..3)],
            groups: 1,
        })
        .collect();
    let stage_pool = PoolingBlockSpec { kind: PoolKind::Max, kernel: 2, stride: 2 };
    let heads = [1, 2, 4][rng.gen_range(0..3)];
    let vit = HybridVitBlockSpec {
        prefix: None,
        heads,
        qkv_dim: [16, 32, 64][rng.gen_range(0..3)],
        ff_dim: None,
        attn_kind: AttnKind::Softmax,
    };
    let kind = [PoolKind::Max, PoolKind::Avg, PoolKind::Combined][rng.gen_range(0..3)];
    let pooled =
        HybridVitBlockSpec { prefix: Some(VitPrefix::Pooling(PoolingBlockSpec { kind, kernel: 2, stride: 2 })), ..vit };
    let plain = build_graph(&ArchitectureDescriptor::new(cnn.clone(), stage_pool, [vit], space.num_classes), space)
        .map_err(|e| e.to_string())?;
    let with_pool = build_graph(&ArchitectureDescriptor::new(cnn, stage_pool, [pooled], space.num_classes), space)
        .map_err(|e| e.to_string())?;
    Ok((quadratic_term(&plain)?, quadratic_term(&with_pool)?))
}

fn pooling_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (k, s) = [(2, 2), (4, 4), (3, 1), (2, 1)][rng.gen_range(0..4)];
        let x = Array::from_shape_fn((rng.gen_range(1..5), rng.gen_range(4..12), rng.gen_range(4..12)), |_| {
            rng.gen_range(-3.0..3.0)
        });
        let m = pool(&x, PoolKind::Max, k, s).map_err(|e| e.to_string())?;
        let a = pool(&x, PoolKind::Avg, k, s).map_err(|e| e.to_string())?;
        let c = pool(&x, PoolKind::Combined, k, s).map_err(|e| e.to_string())?;
        let expect = m.mapv(|v| 0.5 * v) + a.mapv(|v| 0.5 * v);
        ensure(c == expect, || "Combined != 0.5 Max + 0.5 Avg".into())?;

        // dyadic constants keep the window sums exact
        let value = rng.gen_range(-64i32..64) as f64 / 8.0;
        let constant = FeatureMap::from_elem(x.dim(), value);
        for kind in [PoolKind::Max, PoolKind::Avg, PoolKind::Combined] {
            let y = pool(&constant, kind, k, s).map_err(|e| e.to_string())?;
            ensure(y.iter().all(|&v| v == value), || format!("{kind:?} moves constant {value}"))?;
        }
    }

    // Pool-ViT prefix on lowered architectures
    let space = SearchSpaceConfig::default();
    for i in 0..40 {
        let (plain, pooled) = random_pool_vit_pair(&mut rng, &space)?;
        ensure(pooled > 0 && plain == 16 * pooled, || format!("pair {i}: quadratic {plain} vs pooled {pooled}"))?;
    }

    // and at the operator level with the instrumented kernel
    let p = random_mhsa(&mut rng, 16, 16);
    let x = Array::from_shape_fn((16, 8, 8), |_| rng.gen_range(-1.0..1.0));
    let mut c_plain = OpCounter::new();
    mhsa_softmax(&hybridnas_core::kernels::feature_map_to_tokens(&x), &p, 2, &mut c_plain)
        .map_err(|e| e.to_string())?;
    let pooled = pool(&x, PoolKind::Max, 2, 2).map_err(|e| e.to_string())?;
    let mut c_pooled = OpCounter::new();
    mhsa_softmax(&hybridnas_core::kernels::feature_map_to_tokens(&pooled), &p, 2, &mut c_pooled)
        .map_err(|e| e.to_string())?;
    let quad_plain = c_plain.total() - 4 * 64 * 16 * 16;
    let quad_pooled = c_pooled.total() - 4 * 16 * 16 * 16;
    ensure(quad_plain == 16 * quad_pooled, || format!("counter quadratic {quad_plain} vs {quad_pooled}"))?;
    Ok("Combined exact, constants fixed, Pool-ViT quadratic term exactly /16 on 40 lowered pairs and the instrumented kernel".into())
}

fn ram_oracle() -> Outcome {
    let corpus = common::small_graph_corpus();
    let on = DeploymentAssumptions::default();
    let off = DeploymentAssumptions { inplace_elementwise: false, ..Default::default() };
    for (i, g) in corpus.iter().enumerate() {
        ensure(g.len() <= 25, || format!("graph {i} has {} nodes", g.len()))?;
        let by_def = common::ram_by_definition(g, 1);
        ensure(estimate_ram(g, &off) == by_def, || {
            format!("graph {i}: no-inplace {} vs definition {by_def}", estimate_ram(g, &off))
        })?;
        ensure(common::ram_by_allocator(g, false, 1) == by_def, || {
            format!("graph {i}: allocator disagrees with definition")
        })?;
        let by_alloc = common::ram_by_allocator(g, true, 1);
        ensure(estimate_ram(g, &on) == by_alloc, || {
            format!("graph {i}: inplace {} vs allocator {by_alloc}", estimate_ram(g, &on))
        })?;
    }
    let mut b = GraphBuilder::new();
    let x = b.push(OpKind::Input, &[]);
    let c = b.push(OpKind::Conv2d { kernel: 3, stride: 1, padding: 1, groups: 1, in_ch: 3, out_ch: 16 }, &[x]);
    let chain = infer_shapes(b.finish(c).map_err(|e| e.to_string())?, TensorShape::new(3, 32, 32))
        .map_err(|e| e.to_string())?;
    ensure(estimate_ram(&chain, &on) == 19_456, || "chain example".into())?;
    Ok(format!("{} graphs (<= 25 nodes), in-place on and off, exact bytes", corpus.len()))
}

fn search_runs(
    space: &SearchSpaceConfig,
    seeds: std::ops::Range<u64>,
    budget: usize,
) -> Result<Vec<SearchHistory>, String> {
    seeds
        .map(|seed| {
            let cfg = SearchConfig { evaluation_budget: budget, seed, ..Default::default() };
            let mut ev = BuiltinEvaluator::SyntheticParamTarget { target: 50_000 };
            run_search(space, &cfg, &mut ev).map_err(|e| e.to_string())
        })
        .collect()
}

fn search_machinery(histories: &mut Vec<SearchHistory>) -> Outcome {
    let started = Instant::now();
    let space = common::toy_space();
    let all = common::enumerate_valid(&space);
    ensure(all.len() <= 600, || format!("toy space has {} architectures", all.len()))?;
    let optimum = all
        .values()
        .filter(|(_, p)| *p <= space.max_params)
        .map(|(_, p)| common::synthetic_fitness(*p))
        .fold(f64::NEG_INFINITY, f64::max);
    let runs = search_runs(&space, 0..20, 300)?;
    let hits = runs
        .iter()
        .filter(|h| h.ok().filter_map(|c| c.val_accuracy).fold(f64::NEG_INFINITY, f64::max) == optimum)
        .count();
    histories.extend(runs);
    ensure(hits >= 18, || format!("optimum found in {hits}/20 seeds"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dirs = [Direction::Maximize, Direction::Minimize, Direction::Minimize];
    for trial in 0..20 {
        let points: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                // coarse grid so ties and duplicates occur
                (0..3).map(|_| rng.gen_range(0..20) as f64).collect()
            })
            .collect();
        let fast = pareto_front(&points, &dirs);
        let brute: Vec<usize> = (0..points.len())
            .filter(|&i| !(0..points.len()).any(|j| j != i && dominates(&points[j], &points[i], &dirs)))
            .collect();
        ensure(fast == brute, || format!("trial {trial}: pareto front differs from brute force"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let cfg = SearchConfig { evaluation_budget: 300, seed: 42, ..Default::default() };
        let mut ev = BuiltinEvaluator::SyntheticParamTarget { target: 50_000 };
        let h = run_search(&space, &cfg, &mut ev).map_err(|e| e.to_string())?;
        let out = dir.path().join(format!("run{run}"));
        write_outputs(&h, &cfg.objectives, &ScatterAxes::default(), &out).map_err(|e| e.to_string())?;
        let files: Vec<Vec<u8>> = ["history.csv", "genomes.json", "pareto.csv", "stats.csv", "scatter.svg"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
        histories.push(h);
    }
    ensure(outputs[0] == outputs[1], || "same-seed outputs differ".into())?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "optimum in {hits}/20 seeds over {} architectures, pareto == brute force (20x200), byte-identical reruns",
        all.len()
    ))
}

fn constraint_soundness(mut histories: Vec<SearchHistory>) -> Outcome {
    let default_space = SearchSpaceConfig::default();
    for (seed, ev) in [(1, BuiltinEvaluator::NegativeMacs), (2, BuiltinEvaluator::Constant(0.5))] {
        let cfg = SearchConfig {
            evaluation_budget: 200,
            population_size: 50,
            tournament_size: 10,
            seed,
            ..Default::default()
        };
        let mut ev = ev;
        histories.push(run_search(&default_space, &cfg, &mut ev).map_err(|e| e.to_string())?);
    }
    histories.extend(search_runs(&default_space, 3..5, 200)?);
    let mut n = 0;
    for h in &histories {
        for c in &h.candidates {
            ensure(c.cost.params <= 100_000, || format!("{} has {} params", c.id, c.cost.params))?;
            let recount = count_params(&c.graph).0;
            ensure(recount == c.cost.params, || format!("{}: recorded {} vs recount {recount}", c.id, c.cost.params))?;
            n += 1;
        }
    }
    Ok(format!("{n} evaluated candidates across {} searches, all <= 100000 params", histories.len()))
}

fn main() -> ExitCode {
    let mut histories = Vec::new();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &r {
            Ok(detail) => format!("[PASS] {name}: {detail}"),
            Err(why) => format!("[FAIL] {name}: {why}"),
        };
        println!("{line} [{:.1?}]", started.elapsed());
        results.push((name, r));
    };
    run("mac-param-oracle-equivalence", &mut mac_param_oracle);
    run("attention-math-suite", &mut attention_math);
    run("quadratic-vs-linear-scaling", &mut attention_scaling);
    run("bn-fold-equivalence", &mut bn_fold);
    run("pooling-identities", &mut pooling_identities);
    run("ram-liveness-oracle", &mut ram_oracle);
    run("search-machinery", &mut || search_machinery(&mut histories));
    let collected = std::mem::take(&mut histories);
    let mut collected = Some(collected);
    run("constraint-soundness", &mut || constraint_soundness(collected.take().unwrap_or_default()));
    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
