mod common;

use hybridnas_core::graph::NetworkGraph;
use hybridnas_core::report::{
    genome_records, history_rows, population_stats, read_csv, read_genomes, write_outputs, HistoryRow,
    PopulationStatsRow, ScatterAxes, GENOMES_JSON, HISTORY_CSV, PARETO_CSV, SCATTER_SVG, STATS_CSV,
};
use hybridnas_core::search::{
    dominates, run_search, BuiltinEvaluator, Direction, EvalRequest, Objective, ObjectiveSpec, ParallelEvaluator,
    SearchConfig, SearchHistory,
};
use hybridnas_core::searchspace::{decode, validate};

fn history() -> (SearchHistory, SearchConfig) {
    let space = common::toy_space();
    let cfg = SearchConfig {
        evaluation_budget: 120,
        population_size: 40,
        tournament_size: 8,
        seed: 17,
        ..Default::default()
    };
    let mut ev = ParallelEvaluator::new("flaky", 1, |r: &EvalRequest<'_>| {
        if r.cost.params.is_multiple_of(5) {
            Err("diverged".into())
        } else {
            Ok(BuiltinEvaluator::SyntheticParamTarget { target: 50_000 }.score(r.cost))
        }
    });
    (run_search(&space, &cfg, &mut ev).unwrap(), cfg)
}

#[test]
fn outputs_round_trip_through_readers() {
    let (h, cfg) = history();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&h, &cfg.objectives, &ScatterAxes::default(), dir.path()).unwrap();

    let rows: Vec<HistoryRow> = read_csv(dir.path().join(HISTORY_CSV)).unwrap();
    assert_eq!(rows, history_rows(&h));
    assert_eq!(rows.len(), cfg.evaluation_budget);
    let header = std::fs::read_to_string(dir.path().join(HISTORY_CSV)).unwrap();
    assert_eq!(header.lines().next().unwrap(), "id,parent_id,params,macs,rom,ram,latency_proxy,val_accuracy,status");
    for r in &rows {
        if r.status == "error" {
            assert_eq!(r.val_accuracy, None);
        }
        if let Some(p) = &r.parent_id {
            assert!(p < &r.id);
        }
    }

    let genomes = read_genomes(dir.path().join(GENOMES_JSON)).unwrap();
    assert_eq!(genomes, genome_records(&h));
    let space = common::toy_space();
    for (g, c) in genomes.iter().zip(&h.candidates) {
        let arch = decode(&g.genome, &space).unwrap();
        assert!(validate(&arch, &space).valid);
        assert_eq!(arch, c.architecture);
    }

    let stats: Vec<PopulationStatsRow> = read_csv(dir.path().join(STATS_CSV)).unwrap();
    assert_eq!(stats, population_stats(&h));
    assert_eq!(stats.len(), h.ok().count());

    let pareto: Vec<HistoryRow> = read_csv(dir.path().join(PARETO_CSV)).unwrap();
    assert!(!pareto.is_empty());
    let specs = &cfg.objectives;
    let dirs: Vec<Direction> = specs.iter().map(|s| s.direction).collect();
    for p in &pareto {
        assert!(rows.contains(p), "pareto row {} not in history", p.id);
        assert_eq!(p.status, "ok");
        let c = h.candidates.iter().find(|c| c.id == p.id).unwrap();
        let v = c.objectives(specs).unwrap();
        assert!(h.ok().all(|o| !dominates(&o.objectives(specs).unwrap(), &v, &dirs)));
    }

    let svg = std::fs::read_to_string(dir.path().join(SCATTER_SVG)).unwrap();
    assert_eq!(svg.matches("class=\"point\"").count(), h.ok().count());
}

#[test]
fn scatter_axes_are_selectable() {
    let (h, cfg) = history();
    let dir = tempfile::tempdir().unwrap();
    let axes = ScatterAxes { x: ObjectiveSpec::from(Objective::Macs), y: ObjectiveSpec::from(Objective::RamBytes) };
    write_outputs(&h, &cfg.objectives, &axes, dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join(SCATTER_SVG)).unwrap();
    assert!(svg.contains(">macs<") && svg.contains(">ram<"));
}

#[test]
fn graph_json_round_trips() {
    let (h, _) = history();
    for c in h.candidates.iter().take(20) {
        let back = NetworkGraph::from_json_str(&c.graph.to_json()).unwrap();
        assert_eq!(back, c.graph);
        let v: serde_json::Value = serde_json::from_str(&c.graph.to_json()).unwrap();
        assert_eq!(v["nodes"][0]["op_kind"], "Input");
        assert!(v["nodes"].as_array().unwrap().iter().all(|n| n["shape"].is_array()));
    }
}
