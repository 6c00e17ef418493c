//! End-to-end generation: matrix, compressor plan, stages, wiring, prefix
//! adder and netlist, plus the design sweep and the FDC fitting flow.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::cpa::{
    arrival_offsets, brent_kung, build_initial_cpa, fit_depth, fit_fdc, kogge_stone, optimize_cpa, random_graph,
    ripple_carry, segment_regions, sklansky, DepthFit, FdcEval, FdcFeatures, FdcModel, FitReport, OptimizeOptions,
    OptimizeReport, PrefixGraph, Regions, DEFAULT_EPSILON,
};
use crate::ct_assign::{assign, AssignMethod, AssignOptions, AssignReport, StageAssignment};
use crate::ct_plan::{plan_area, plan_compressors, ColumnPlan};
use crate::ct_wire::{evaluate_wiring, optimize_wiring, zero_arrivals, WireOptions, WireReport, WireStrategy, WiringPlan};
use crate::ilp::SolveOptions;
use crate::netlist::{elaborate, elaborate_adder, AreaReport, ElabOptions, Function, Netlist};
use crate::ppg::{generate_and_array, inject_accumulator, PartialProductMatrix};
use crate::tech::GateDelays;
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Area,
    Timing,
    Tradeoff,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Area, Strategy::Timing, Strategy::Tradeoff];

    /// CPA budget as a multiple of the full-width Sklansky worst-path cost.
    pub fn budget_factor(self) -> f64 {
        match self {
            Strategy::Area => 1.25,
            Strategy::Tradeoff => 1.0,
            Strategy::Timing => 0.9,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Area => "area",
            Strategy::Timing => "timing",
            Strategy::Tradeoff => "tradeoff",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "area" => Ok(Strategy::Area),
            "timing" => Ok(Strategy::Timing),
            "tradeoff" => Ok(Strategy::Tradeoff),
            _ => Err(Error::Config(format!("unknown strategy {s:?} (area, timing, tradeoff)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenSpec {
    pub width: usize,
    /// 0 for a plain multiplier.
    pub acc_width: usize,
    pub strategy: Strategy,
    /// CPA deadline in time units from the earliest adder input; overrides
    /// the strategy budget.
    pub target_delay: Option<f64>,
    pub name: Option<String>,
}

impl GenSpec {
    pub fn new(width: usize, acc_width: usize, strategy: Strategy) -> Self {
        GenSpec { width, acc_width, strategy, target_delay: None, name: None }
    }

    pub fn default_name(&self) -> String {
        if self.acc_width > 0 {
            format!("mac{}x{}_{}", self.width, self.acc_width, self.strategy.as_str())
        } else {
            format!("mult{}_{}", self.width, self.strategy.as_str())
        }
    }
}

/// Stage-ILP settings by width. Above 32 bits each LP takes on the order of
/// a second, so the greedy schedule is used and compared with the bound.
pub fn assign_options(width: usize, cfg: &Config) -> AssignOptions {
    let nodes = cfg.solver.assign_nodes.unwrap_or(match width {
        0..=16 => 20_000,
        17..=32 => 300,
        _ => 0,
    });
    let solve = SolveOptions { backend: cfg.solver.backend(), ..SolveOptions::default() }
        .with_time_limit(cfg.solver.time_limit())
        .with_node_limit(nodes.max(1));
    AssignOptions {
        method: if nodes == 0 { AssignMethod::Greedy } else { AssignMethod::Ilp },
        solve,
        tie_break_nodes: if width <= 16 { 2_000 } else { nodes.min(200) },
        ..AssignOptions::default()
    }
}

pub fn wire_options(width: usize, cfg: &Config) -> WireOptions {
    let solve = SolveOptions { backend: cfg.solver.backend(), ..SolveOptions::default() }
        .with_time_limit(cfg.solver.time_limit())
        .with_node_limit(cfg.solver.wire_nodes);
    WireOptions {
        strategy: WireStrategy::Ilp,
        solve,
        search_budget: cfg.solver.search_budget.unwrap_or(match width {
            0..=16 => 50_000_000,
            17..=32 => 10_000_000,
            _ => 2_000_000,
        }),
        max_binaries: cfg.solver.wire_max_binaries,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpaSummary {
    pub width: usize,
    pub regions: Regions,
    /// Arrival of each adder input column.
    pub profile: Vec<f64>,
    pub budget: f64,
    /// Worst path cost of a full-width Sklansky adder under the same
    /// arrivals.
    pub reference: f64,
    pub initial_nodes: usize,
    pub nodes: usize,
    pub max_depth: usize,
    pub worst_cost: f64,
    pub met: bool,
    /// The refined graph missed its budget and a Sklansky adder with a
    /// lower worst cost was used instead.
    pub fallback: bool,
    pub optimize: OptimizeReport,
}

/// Everything written next to a design, minus run times so that reruns
/// are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub name: String,
    pub function: Function,
    pub strategy: Strategy,
    pub stages: usize,
    pub stage_bound: usize,
    pub stage_optimal: bool,
    pub assign: AssignReport,
    pub full_adders: usize,
    pub half_adders: usize,
    /// 3 per 3:2, 2 per 2:2.
    pub ct_area_units: usize,
    pub ct_delay: f64,
    pub wiring: WireReport,
    pub cpa: CpaSummary,
    pub area: AreaReport,
    pub delay: f64,
    /// Arrival of each product bit.
    pub output_arrivals: Vec<f64>,
    pub critical_path: Vec<String>,
    pub warnings: Vec<String>,
}

pub struct Design {
    pub ppm: PartialProductMatrix,
    pub plans: Vec<ColumnPlan>,
    pub assignment: StageAssignment,
    pub wiring: WiringPlan,
    pub cpa: PrefixGraph,
    pub netlist: Netlist,
    pub report: DesignReport,
}

/// Shapes and refines the prefix adder for the given input arrivals.
pub fn plan_cpa(
    profile: &[f64],
    strategy: Strategy,
    target_delay: Option<f64>,
    model: &FdcModel,
    observe: &mut dyn FnMut(&PrefixGraph),
) -> Result<(PrefixGraph, CpaSummary)> {
    let w = profile.len();
    let regions = segment_regions(profile, DEFAULT_EPSILON);
    let mut g = build_initial_cpa(&regions, profile, 1.0)?;
    let offsets = arrival_offsets(profile);
    let mut reference_graph = sklansky(w)?;
    reference_graph.normalize()?;
    let worst = |g: &PrefixGraph| FdcEval::new(g, model, &offsets).bit_costs(g).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let reference = worst(&reference_graph);
    let earliest = profile.iter().copied().fold(f64::INFINITY, f64::min);
    let budget = match target_delay {
        Some(t) => t - earliest,
        None => strategy.budget_factor() * reference,
    };
    let initial_nodes = g.prefix_nodes();
    let rep = optimize_cpa(&mut g, &vec![budget; w], &offsets, model, &OptimizeOptions::default(), observe)?;
    let fallback = !rep.met() && reference < worst(&g);
    if fallback {
        g = reference_graph;
    }
    let worst_cost = worst(&g);
    let summary = CpaSummary {
        width: w,
        regions,
        profile: profile.to_vec(),
        budget,
        reference,
        initial_nodes,
        nodes: g.prefix_nodes(),
        max_depth: g.max_depth(),
        worst_cost,
        met: worst_cost <= budget + 1e-9,
        fallback,
        optimize: rep,
    };
    Ok((g, summary))
}

pub fn generate(spec: &GenSpec, cfg: &Config) -> Result<Design> {
    cfg.validate()?;
    let mut ppm = generate_and_array(spec.width)?;
    if spec.acc_width > 0 {
        ppm = inject_accumulator(ppm, spec.acc_width)?;
    }
    let plans = plan_compressors(&ppm);
    let mut warnings = Vec::new();
    let (a, arep) = assign(&plans, &assign_options(spec.width, cfg))?;
    if arep.hit_limit {
        warnings.push(format!("stage ILP stopped at its limit with {} stages (bound {})", a.stages, arep.bound));
    } else if a.method == AssignMethod::Greedy && a.stages > arep.bound {
        warnings.push(format!("greedy stage schedule has {} stages (bound {})", a.stages, arep.bound));
    }
    let d = cfg.delay_table();
    let arr = zero_arrivals(&a);
    let (w, wrep) = optimize_wiring(&a, &d, &arr, &wire_options(spec.width, cfg))?;
    if wrep.hit_limit {
        warnings.push("wiring ILP stopped at its limit; using its incumbent".into());
    }
    let timing = evaluate_wiring(&a, &w, &d, &arr);
    let out_bits = ppm.result_bits();
    let mut profile = timing.column_profile(0.0);
    profile.resize(out_bits, 0.0);
    let (g, cpa) = plan_cpa(&profile, spec.strategy, spec.target_delay, &cfg.fdc, &mut |_| {})?;
    if !cpa.met {
        warnings.push(format!("prefix adder misses its budget: worst cost {} > {}", cpa.worst_cost, cpa.budget));
    }
    let name = spec.name.clone().unwrap_or_else(|| spec.default_name());
    let nl = elaborate(&ppm, &a, &w, &g, &ElabOptions { name: name.clone(), fold: true })?;
    let area = nl.area(&cfg.area);
    let t = nl.timing(&cfg.gate_delays, &BTreeMap::new())?;
    let report = DesignReport {
        name,
        function: nl.function.clone(),
        strategy: spec.strategy,
        stages: a.stages,
        stage_bound: arep.bound,
        stage_optimal: a.optimal,
        assign: arep,
        full_adders: a.total_full(),
        half_adders: a.total_half(),
        ct_area_units: plan_area(&plans),
        ct_delay: timing.max,
        wiring: wrep,
        cpa,
        area,
        delay: t.max,
        output_arrivals: t.outputs[0].clone(),
        critical_path: t.critical_path,
        warnings,
    };
    Ok(Design { ppm, plans, assignment: a, wiring: w, cpa: g, netlist: nl, report })
}

/// Prefix adder with the given input arrivals (all zero when `profile` is
/// empty).
pub fn generate_adder(
    width: usize,
    profile: &[f64],
    strategy: Strategy,
    target_delay: Option<f64>,
    name: Option<String>,
    cfg: &Config,
) -> Result<(Netlist, PrefixGraph, CpaSummary)> {
    cfg.validate()?;
    let profile = if profile.is_empty() { vec![0.0; width] } else { profile.to_vec() };
    if profile.len() != width {
        return Err(Error::Config(format!("{} arrivals for a {width}-bit adder", profile.len())));
    }
    let (g, summary) = plan_cpa(&profile, strategy, target_delay, &cfg.fdc, &mut |_| {})?;
    let name = name.unwrap_or_else(|| format!("add{width}_{}", strategy.as_str()));
    let nl = elaborate_adder(&g, &ElabOptions { name, fold: true })?;
    Ok((nl, g, summary))
}

/// Writes `<name>.v`, `<name>.json` and `<name>.report.json`.
pub fn write_design(dir: &Path, nl: &Netlist, report: &impl Serialize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let v = nl.to_verilog();
    if !v.renamed.is_empty() {
        log::warn!("renamed identifiers in Verilog output: {:?}", v.renamed);
    }
    let files = [
        (dir.join(format!("{}.v", nl.name)), v.text),
        (dir.join(format!("{}.json", nl.name)), nl.to_json()?),
        (dir.join(format!("{}.report.json", nl.name)), {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }),
    ];
    let mut paths = Vec::new();
    for (p, text) in files {
        std::fs::write(&p, text)?;
        paths.push(p);
    }
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub width: usize,
    pub acc_width: usize,
    pub strategy: Strategy,
    pub area: f64,
    pub delay: f64,
    pub ct_delay: f64,
    pub cpa_nodes: usize,
    pub stages: usize,
    pub cpa_met: bool,
    /// Not dominated in (area, delay) by another point of the same width.
    pub pareto: bool,
}

/// One design per width and strategy, in parallel.
pub fn sweep(widths: &[usize], acc_width: usize, strategies: &[Strategy], cfg: &Config) -> Result<Vec<SweepPoint>> {
    let jobs: Vec<(usize, Strategy)> = widths.iter().flat_map(|&w| strategies.iter().map(move |&s| (w, s))).collect();
    let results = par::map_slice(&jobs, |&(w, s)| generate(&GenSpec::new(w, acc_width, s), cfg));
    let mut pts = Vec::with_capacity(jobs.len());
    for ((w, s), r) in jobs.iter().zip(results) {
        let r = r?.report;
        pts.push(SweepPoint {
            width: *w,
            acc_width,
            strategy: *s,
            area: r.area.total,
            delay: r.delay,
            ct_delay: r.ct_delay,
            cpa_nodes: r.cpa.nodes,
            stages: r.stages,
            cpa_met: r.cpa.met,
            pareto: false,
        });
    }
    mark_pareto(&mut pts);
    Ok(pts)
}

fn mark_pareto(pts: &mut [SweepPoint]) {
    let snapshot: Vec<(usize, f64, f64)> = pts.iter().map(|p| (p.width, p.area, p.delay)).collect();
    for p in pts.iter_mut() {
        p.pareto = !snapshot.iter().any(|&(w, a, d)| {
            w == p.width && a <= p.area && d <= p.delay && (a < p.area || d < p.delay)
        });
    }
}

pub fn sweep_csv(pts: &[SweepPoint]) -> String {
    let mut s = String::from("width,acc_width,strategy,area,delay,ct_delay,cpa_nodes,stages,cpa_met,pareto\n");
    for p in pts {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            p.width,
            p.acc_width,
            p.strategy.as_str(),
            p.area,
            p.delay,
            p.ct_delay,
            p.cpa_nodes,
            p.stages,
            p.cpa_met,
            p.pareto
        );
    }
    s
}

/// A prefix adder with its gate-level delays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub name: String,
    pub graph: PrefixGraph,
    /// Prefix depth of each output `[j:0]`.
    pub depths: Vec<usize>,
    /// Gate-level arrival of the sum bit fed by each output `[j:0]`
    /// (`s[j+1]`, the carry out for the top bit).
    pub delays: Vec<f64>,
}

/// Classic adders and randomly reshaped ripple chains over several widths,
/// timed at gate level with `truth`.
pub fn fdc_corpus(seed: u64, random_per_width: usize, truth: &GateDelays) -> Result<Vec<CorpusEntry>> {
    let widths = [8usize, 12, 16, 24, 32, 48, 64];
    let mut graphs: Vec<(String, PrefixGraph)> = Vec::new();
    for &w in &widths {
        graphs.push((format!("rca{w}"), ripple_carry(w)?));
        graphs.push((format!("sklansky{w}"), sklansky(w)?));
        graphs.push((format!("kogge_stone{w}"), kogge_stone(w)?));
        graphs.push((format!("brent_kung{w}"), brent_kung(w)?));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ w as u64);
        for k in 0..random_per_width {
            let steps = rng.random_range(w / 2..=4 * w);
            graphs.push((format!("random{w}_{k}"), random_graph(w, steps, &mut rng)?));
        }
    }
    let timed = par::map_slice(&graphs, |(name, g)| -> Result<CorpusEntry> {
        let mut g = g.clone();
        g.normalize()?;
        let nl = elaborate_adder(&g, &ElabOptions { name: name.clone(), fold: true })?;
        let t = nl.timing(truth, &BTreeMap::new())?;
        let delays = t.outputs[0][1..].to_vec();
        Ok(CorpusEntry { name: name.clone(), depths: g.depth_profile(), graph: g, delays })
    });
    timed.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingFit {
    pub fdc: FitReport,
    pub depth: DepthFit,
    /// Refits until the chosen worst paths stop changing.
    pub iterations: usize,
    pub features: Vec<FdcFeatures>,
}

/// Fits the FDC model to the corpus, one sample per adder output. Each
/// sample takes the features of the output's worst path under the current
/// model; the fit is repeated with the new model until those features stop
/// changing. The depth-only baseline fits the same delays against prefix
/// depth.
pub fn fit_timing(corpus: &[CorpusEntry], start: &FdcModel, max_iterations: usize) -> Result<TimingFit> {
    let delays: Vec<f64> = corpus.iter().flat_map(|e| e.delays.iter().copied()).collect();
    let path_features = |m: &FdcModel| -> Vec<FdcFeatures> {
        corpus
            .iter()
            .flat_map(|e| {
                let ev = FdcEval::new(&e.graph, m, &[]);
                (0..e.graph.width).map(move |j| ev.path(&e.graph, j).features).collect::<Vec<_>>()
            })
            .collect()
    };
    let mut model = *start;
    let mut features = path_features(&model);
    let mut fit = None;
    let mut iterations = 0;
    while iterations < max_iterations.max(1) {
        iterations += 1;
        let samples: Vec<(FdcFeatures, f64)> = features.iter().copied().zip(delays.iter().copied()).collect();
        let f = fit_fdc(&samples)?;
        model = f.model;
        fit = Some(f);
        let next = path_features(&model);
        if next == features {
            break;
        }
        features = next;
    }
    let depth_samples: Vec<(usize, f64)> =
        corpus.iter().flat_map(|e| e.depths.iter().copied().zip(e.delays.iter().copied())).collect();
    let depth = fit_depth(&depth_samples)?;
    Ok(TimingFit { fdc: fit.expect("at least one iteration"), depth, iterations, features })
}

/// One row per adder output, with the features chosen by the final fit.
pub fn corpus_csv(corpus: &[CorpusEntry], features: &[FdcFeatures]) -> String {
    let mut s = String::from("adder,width,bit,depth,f_black,f_blue,n_black,n_blue,delay\n");
    let mut f = features.iter();
    for e in corpus {
        for j in 0..e.graph.width {
            let x = f.next().copied().unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{j},{},{},{},{},{},{}",
                e.name, e.graph.width, e.depths[j], x.f_black, x.f_blue, x.n_black, x.n_blue, e.delays[j]
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("fast".parse::<Strategy>().is_err());
    }

    #[test]
    fn pareto_marks_dominated_points() {
        let p = |w, a, d| SweepPoint {
            width: w,
            acc_width: 0,
            strategy: Strategy::Area,
            area: a,
            delay: d,
            ct_delay: 0.0,
            cpa_nodes: 0,
            stages: 0,
            cpa_met: true,
            pareto: false,
        };
        let mut pts = vec![p(8, 1.0, 2.0), p(8, 2.0, 1.0), p(8, 2.0, 2.0), p(16, 9.0, 9.0)];
        mark_pareto(&mut pts);
        assert_eq!(pts.iter().map(|p| p.pareto).collect::<Vec<_>>(), [true, true, false, true]);
    }
}
