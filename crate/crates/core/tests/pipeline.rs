use macgen::config::Config;
use macgen::cpa::{sklansky, FdcEval, FdcModel};
use macgen::pipeline::*;
use macgen::tech::{AreaWeights, GateDelays};
use macgen::verify::{check_equivalence, Mode, VerifyOptions};

#[test]
fn small_designs_are_correct_for_every_strategy() {
    let cfg = Config::default();
    for (w, acc) in [(4, 0), (6, 0), (4, 8), (5, 6)] {
        for s in Strategy::ALL {
            let d = generate(&GenSpec::new(w, acc, s), &cfg).unwrap();
            let rep = check_equivalence(&d.netlist, &VerifyOptions::default()).unwrap();
            assert_eq!(rep.mode, Mode::Exhaustive);
            assert!(rep.passed, "{w}/{acc}/{s:?}: {:?}", rep.counterexample);
            let r = &d.report;
            assert_eq!(r.stages, d.assignment.stages);
            assert!(r.stages >= r.stage_bound);
            assert_eq!(r.cpa.width, d.ppm.result_bits());
            assert_eq!(r.output_arrivals.len(), d.ppm.result_bits());
            assert!(r.delay >= r.ct_delay);
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let cfg = Config::default();
    let spec = GenSpec::new(8, 0, Strategy::Tradeoff);
    let a = generate(&spec, &cfg).unwrap();
    let b = macgen::par::with_threads(1, || generate(&spec, &cfg).unwrap());
    assert_eq!(a.netlist.to_verilog().text, b.netlist.to_verilog().text);
    assert_eq!(a.netlist.to_json().unwrap(), b.netlist.to_json().unwrap());
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
}

#[test]
fn write_design_emits_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate(&GenSpec { name: Some("m4".into()), ..GenSpec::new(4, 0, Strategy::Area) }, &Config::default()).unwrap();
    let files = write_design(dir.path(), &d.netlist, &d.report).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["m4.v", "m4.json", "m4.report.json"]);
    let back = macgen::netlist::Netlist::from_json(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
    assert!(back.isomorphic(&d.netlist).unwrap());
    let rep: DesignReport = serde_json::from_str(&std::fs::read_to_string(&files[2]).unwrap()).unwrap();
    assert_eq!(rep, d.report);
}

#[test]
fn strategies_order_cpa_budgets() {
    let cfg = Config::default();
    let get = |s| generate(&GenSpec::new(8, 0, s), &cfg).unwrap().report.cpa;
    let (area, trade, timing) = (get(Strategy::Area), get(Strategy::Tradeoff), get(Strategy::Timing));
    assert!(area.budget > trade.budget && trade.budget > timing.budget);
    assert!(area.nodes <= trade.nodes && area.nodes <= timing.nodes);
    assert!(area.worst_cost >= trade.worst_cost && trade.worst_cost >= timing.worst_cost);
    assert!(area.met && trade.met);
    for c in [&area, &trade, &timing] {
        assert!(c.worst_cost <= c.reference.max(c.budget) + 1e-9, "{c:?}");
    }
    let target = generate(&GenSpec { target_delay: Some(1e6), ..GenSpec::new(8, 0, Strategy::Timing) }, &cfg).unwrap();
    assert!(target.report.cpa.met);
    assert_eq!(target.report.cpa.nodes, target.report.cpa.initial_nodes);
}

#[test]
fn loose_budget_beats_sklansky_on_nodes() {
    let cfg = Config::default();
    let d = generate(&GenSpec::new(8, 0, Strategy::Area), &cfg).unwrap();
    let c = &d.report.cpa;
    let mut sk = sklansky(c.width).unwrap();
    sk.normalize().unwrap();
    assert!(c.met);
    assert!(c.nodes < sk.prefix_nodes(), "{} vs {}", c.nodes, sk.prefix_nodes());
    let offsets = macgen::cpa::arrival_offsets(&c.profile);
    let costs = FdcEval::new(&d.cpa, &cfg.fdc, &offsets).bit_costs(&d.cpa);
    assert!(costs.iter().all(|&x| x <= c.budget + 1e-9));
}

#[test]
fn config_weights_reach_the_report() {
    let mut cfg = Config::default();
    cfg.area = AreaWeights(macgen::tech::PerKind::uniform(1.0));
    let d = generate(&GenSpec::new(4, 0, Strategy::Area), &cfg).unwrap();
    assert_eq!(d.report.area.total, d.netlist.gates.len() as f64);
    cfg.gate_delays = GateDelays { intrinsic: macgen::tech::PerKind::uniform(2.0), load: macgen::tech::PerKind::uniform(0.0) };
    let slow = generate(&GenSpec::new(4, 0, Strategy::Area), &cfg).unwrap();
    assert!(slow.report.ct_delay > d.report.ct_delay);
}

#[test]
fn adder_generation() {
    let cfg = Config::default();
    let (nl, g, s) = generate_adder(8, &[], Strategy::Area, None, None, &cfg).unwrap();
    assert_eq!(nl.name, "add8_area");
    assert_eq!(s.width, 8);
    g.validate().unwrap();
    assert!(check_equivalence(&nl, &VerifyOptions::default()).unwrap().passed);
    assert!(generate_adder(8, &[0.0; 3], Strategy::Area, None, None, &cfg).is_err());
}

#[test]
fn sweep_rows_and_csv() {
    let pts = sweep(&[4, 6], 0, &Strategy::ALL, &Config::default()).unwrap();
    assert_eq!(pts.len(), 6);
    for w in [4, 6] {
        assert!(pts.iter().any(|p| p.width == w && p.pareto));
    }
    let csv = sweep_csv(&pts);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("width,acc_width,strategy,area,delay"));
}

#[test]
fn fdc_beats_depth_on_the_corpus() {
    let corpus = fdc_corpus(1, 4, &GateDelays::logical_effort()).unwrap();
    assert!(corpus.len() >= 50);
    let fit = fit_timing(&corpus, &FdcModel::default(), 10).unwrap();
    assert!(fit.fdc.r2 > fit.depth.r2, "fdc {} depth {}", fit.fdc.r2, fit.depth.r2);
    assert_eq!(fit.fdc.samples, corpus.iter().map(|e| e.graph.width).sum::<usize>());
    let csv = corpus_csv(&corpus, &fit.features);
    assert_eq!(csv.lines().count(), fit.fdc.samples + 1);
}
