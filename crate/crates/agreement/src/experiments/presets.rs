//! Named experiments. Each preset runs one acceptance check and returns its verdict.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde_json::json;
use thiserror::Error;

use super::config::{resolve, ComplexSpec, ConfigError, ExperimentConfig, FixtureParams, Overrides, RunParams, TesterParams};
use super::record::{version, PlotSeries, RunRecord, Verdict};
use crate::adversary::{build_adversarial_f, global_agreement_audit, lift_lists, AdversaryError, CandidatePolicy};
use crate::assignment::{distance_on, AssignmentError, GlobalFunction, LocalAssignment};
use crate::cohomology::{f2_cocycle_witness, CohomologyError};
use crate::complex::{ComplexError, SimplicialComplex};
use crate::csp::{AgreementCsp, CspError};
use crate::dp_test::{overlap_law, run_dp_test, DpError, DpParams};
use crate::face::{Face, FaceMap};
use crate::graph::{constraint_graph, kneser_graph, GraphError};
use crate::list_decoder::{decode_global, short_list, AgreementSearch, DecoderError, PipelineParams, ShortListParams};
use crate::perm::Perm;
use crate::rng::{mix, random_bits, stream};
use crate::spectral::{down_up_spectrum, link_expansion, Sidedness, SpectralError, SpectralTolerances};
use crate::stats::Mode;
use crate::ug::{SearchMethod, SearchOptions, UgError, UgInstance, VALUE_EXACT_CAP};

/// Node budget for the exact value of the full dense instance.
const CSP_NODE_CAP: u64 = 2_000_000_000;
const TIE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ug(#[from] UgError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Csp(#[from] CspError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Completeness,
    RandomSoundness,
    PlantedAdversary,
    Rp2Coboundary,
    KneserPropagation,
    StrongWeakLaw,
    ShortlistRecovery,
    SpectralAudit,
    SubinstanceStability,
    DecodeEndToEnd,
}

pub const PRESETS: [Preset; 10] = [
    Preset::Completeness,
    Preset::RandomSoundness,
    Preset::PlantedAdversary,
    Preset::Rp2Coboundary,
    Preset::KneserPropagation,
    Preset::StrongWeakLaw,
    Preset::ShortlistRecovery,
    Preset::SpectralAudit,
    Preset::SubinstanceStability,
    Preset::DecodeEndToEnd,
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name()).collect()
}

pub fn preset(name: &str) -> Option<Preset> {
    PRESETS.into_iter().find(|p| p.name() == name)
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Completeness => "completeness",
            Preset::RandomSoundness => "random-soundness",
            Preset::PlantedAdversary => "planted-adversary",
            Preset::Rp2Coboundary => "rp2-coboundary",
            Preset::KneserPropagation => "kneser-propagation",
            Preset::StrongWeakLaw => "strong-weak-law",
            Preset::ShortlistRecovery => "shortlist-recovery",
            Preset::SpectralAudit => "spectral-audit",
            Preset::SubinstanceStability => "subinstance-stability",
            Preset::DecodeEndToEnd => "decode-end-to-end",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Completeness => "direct products pass the exact test with probability 1",
            Preset::RandomSoundness => "uniform tables pass at the collision-corrected chance rate",
            Preset::PlantedAdversary => "two planted lists pass about half the time yet no function agrees with most faces",
            Preset::Rp2Coboundary => "a non-trivial F2 class gives a consistent instance that is not a coboundary",
            Preset::KneserPropagation => "coboundary instances on a Kneser graph have exactly m satisfying labelings",
            Preset::StrongWeakLaw => "weak inconsistency is at most three times strong inconsistency",
            Preset::ShortlistRecovery => "the short-list algorithm recovers both planted functions",
            Preset::SpectralAudit => "down-up walk second eigenvalue and link expansion",
            Preset::SubinstanceStability => "random half restrictions keep the value of a dense instance",
            Preset::DecodeEndToEnd => "the full list-decoding pipeline recovers a corrupted direct product",
        }
    }

    pub(crate) fn uses_control(self) -> bool {
        matches!(
            self,
            Preset::RandomSoundness | Preset::PlantedAdversary | Preset::Rp2Coboundary | Preset::SpectralAudit
        )
    }

    /// Whether the tester runs on the control complex too.
    pub(crate) fn tests_control(self) -> bool {
        matches!(self, Preset::RandomSoundness | Preset::PlantedAdversary)
    }

    pub(crate) fn uses_tester(self) -> bool {
        matches!(
            self,
            Preset::Completeness
                | Preset::RandomSoundness
                | Preset::PlantedAdversary
                | Preset::ShortlistRecovery
                | Preset::SubinstanceStability
        )
    }

    pub(crate) fn uses_pipeline(self) -> bool {
        matches!(self, Preset::ShortlistRecovery | Preset::DecodeEndToEnd)
    }

    /// Default configuration at desk scale.
    pub fn defaults(self) -> ExperimentConfig {
        let tester = |k, s, mode| TesterParams {
            k,
            s,
            mode,
            ..TesterParams::default()
        };
        let mut c = ExperimentConfig {
            preset: self.name().into(),
            run: RunParams {
                out: PathBuf::from("out").join(self.name()),
                ..RunParams::default()
            },
            ..ExperimentConfig::default()
        };
        let fixture = FixtureParams::default();
        match self {
            Preset::Completeness => {
                c.complex = ComplexSpec::complete(12, 6);
                c.tester = tester(4, 2, Mode::Exact);
                c.fixture = FixtureParams { instances: 20, ..fixture };
            }
            Preset::RandomSoundness => {
                c.complex = ComplexSpec::complete(16, 8);
                c.control = Some(ComplexSpec::complete(16, 16));
                c.tester = tester(8, 2, Mode::MonteCarlo);
                c.fixture = FixtureParams { instances: 1, ..fixture };
            }
            Preset::PlantedAdversary => {
                c.complex = ComplexSpec::complete(20, 10);
                c.control = Some(ComplexSpec::complete(16, 10));
                c.tester = tester(8, 3, Mode::MonteCarlo);
                c.fixture = FixtureParams { instances: 1, m: 2, ..fixture };
            }
            Preset::Rp2Coboundary => {
                c.complex = ComplexSpec::named("projective-plane");
                c.control = Some(ComplexSpec::complete(6, 3));
                c.fixture = FixtureParams { instances: 1, ..fixture };
            }
            Preset::KneserPropagation => {
                c.complex = ComplexSpec::kneser(10, 2);
                c.fixture = FixtureParams { instances: 100, m: 3, ..fixture };
            }
            Preset::StrongWeakLaw => {
                c.complex = ComplexSpec::complete(8, 6);
                c.fixture = FixtureParams { instances: 50, m: 2, ..fixture };
            }
            Preset::ShortlistRecovery => {
                c.complex = ComplexSpec::complete(18, 6);
                c.tester = tester(6, 2, Mode::Exact);
                c.fixture = FixtureParams {
                    instances: 1,
                    noise: 0.1,
                    distance: 7,
                    ..fixture
                };
                c.pipeline = PipelineParams {
                    delta: 0.3,
                    eta: 0.1,
                    ..PipelineParams::default()
                };
            }
            Preset::SpectralAudit => {
                c.complex = ComplexSpec::complete(20, 4);
                c.control = Some(ComplexSpec::complete(10, 4));
                c.fixture = FixtureParams {
                    instances: 1,
                    level: 2,
                    ..fixture
                };
            }
            Preset::SubinstanceStability => {
                c.complex = ComplexSpec::complete(32, 4);
                c.tester = tester(4, 2, Mode::Exact);
                c.fixture = FixtureParams {
                    instances: 50,
                    planted_fraction: 0.5,
                    restrict_to: 16,
                    ..fixture
                };
            }
            Preset::DecodeEndToEnd => {
                c.complex = ComplexSpec::complete(20, 10);
                c.fixture = FixtureParams {
                    instances: 1,
                    noise: 0.05,
                    ..fixture
                };
            }
        }
        c
    }
}

/// Resolve the configuration for `name` under `overrides` and run it.
pub fn run_preset(name: &str, overrides: &Overrides) -> Result<RunRecord, ConfigError> {
    let cfg = resolve(Some(name), overrides)?;
    Ok(run_config(&cfg))
}

/// Run an already validated configuration. Failures inside the run become failing
/// verdicts so that a partial record is still produced.
pub fn run_config(cfg: &ExperimentConfig) -> RunRecord {
    let start = Instant::now();
    let mut plots = Vec::new();
    let verdict = match preset(&cfg.preset) {
        None => Err(ExperimentError::Setup(format!("unknown preset `{}`", cfg.preset))),
        Some(p) => {
            let run = match p {
                Preset::Completeness => completeness,
                Preset::RandomSoundness => random_soundness,
                Preset::PlantedAdversary => planted_adversary,
                Preset::Rp2Coboundary => rp2_coboundary,
                Preset::KneserPropagation => kneser_propagation,
                Preset::StrongWeakLaw => strong_weak_law,
                Preset::ShortlistRecovery => shortlist_recovery,
                Preset::SpectralAudit => spectral_audit,
                Preset::SubinstanceStability => subinstance_stability,
                Preset::DecodeEndToEnd => decode_end_to_end,
            };
            run(cfg, &mut plots)
        }
    };
    let verdict = verdict.unwrap_or_else(|e| Verdict {
        criterion: cfg.preset.clone(),
        passed: false,
        summary: format!("error: {e}"),
        metrics: json!({}),
    });
    RunRecord {
        preset: cfg.preset.clone(),
        config_hash: cfg.hash(),
        version: version().to_string(),
        seed: cfg.run.seed,
        verdicts: vec![verdict],
        wall_seconds: start.elapsed().as_secs_f64(),
        plots,
    }
}

type Outcome = Result<Verdict, ExperimentError>;

fn verdict(cfg: &ExperimentConfig, passed: bool, summary: String, metrics: serde_json::Value) -> Outcome {
    Ok(Verdict {
        criterion: cfg.preset.clone(),
        passed,
        summary,
        metrics,
    })
}

fn build(spec: &ComplexSpec) -> Result<SimplicialComplex, ExperimentError> {
    spec.build().map_err(ExperimentError::Setup)
}

fn control(cfg: &ExperimentConfig) -> Result<SimplicialComplex, ExperimentError> {
    build(
        cfg.control
            .as_ref()
            .ok_or_else(|| ExperimentError::Setup("missing [control] complex".into()))?,
    )
}

fn tester_params(t: &TesterParams, seed: u64) -> DpParams {
    match t.mode {
        Mode::Exact => DpParams::exact(t.k, t.s),
        Mode::MonteCarlo => DpParams::monte_carlo(t.k, t.s, t.trials, seed),
    }
}

fn completeness(cfg: &ExperimentConfig, _: &mut Vec<PlotSeries>) -> Outcome {
    let x = build(&cfg.complex)?;
    let domain = Face::range(x.n());
    let seed = cfg.run.seed;
    let p = tester_params(&cfg.tester, mix(seed, 1));
    let mut reports = Vec::with_capacity(cfg.fixture.instances);
    for j in 0..cfg.fixture.instances as u64 {
        let f = GlobalFunction::random(domain, &mut stream(mix(seed, 0), j));
        let table = LocalAssignment::direct_product(&x, cfg.tester.k, &f)?;
        reports.push(run_dp_test(&x, &table, &p)?.report);
    }
    let perfect = reports.iter().filter(|r| r.passes == r.trials).count();
    let min = reports.iter().map(|r| r.estimate).fold(1.0, f64::min);
    verdict(
        cfg,
        perfect == reports.len(),
        format!("{perfect}/{} direct products accepted on every outcome, min pass rate {min}", reports.len()),
        json!({ "functions": reports.len(), "perfect": perfect, "min_estimate": min, "reports": reports }),
    )
}

/// Acceptance probability of an independent uniform table: `A = A'` always passes,
/// otherwise the two restrictions to `I` agree with probability `2^-s`.
fn chance_rate(d: usize, k: usize, s: usize) -> f64 {
    let same = overlap_law(d, k, s)[k];
    same + (1.0 - same) * 0.5f64.powi(s as i32)
}

fn random_soundness(cfg: &ExperimentConfig, _: &mut Vec<PlotSeries>) -> Outcome {
    let seed = cfg.run.seed;
    let (k, s) = (cfg.tester.k, cfg.tester.s);
    let mut rows = Vec::new();
    for (j, x) in [build(&cfg.complex)?, control(cfg)?].into_iter().enumerate() {
        let j = j as u64;
        let table = LocalAssignment::random(&x, k, mix(seed, 2 * j))?;
        let r = run_dp_test(&x, &table, &tester_params(&cfg.tester, mix(seed, 2 * j + 1)))?;
        let expected = chance_rate(x.d(), k, s);
        rows.push(json!({
            "n": x.n(),
            "d": x.d(),
            "expected": expected,
            "covered": r.report.covers(expected),
            "report": r.report,
            "same_face_rate": r.same_face_rate,
        }));
    }
    let covered = rows.iter().all(|r| r["covered"] == true);
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "complete({},{}) {:.4} in [{:.4}, {:.4}] vs {:.4}",
                r["n"], r["d"], r["report"]["estimate"].as_f64().unwrap_or(f64::NAN),
                r["report"]["ci_lo"].as_f64().unwrap_or(f64::NAN),
                r["report"]["ci_hi"].as_f64().unwrap_or(f64::NAN),
                r["expected"].as_f64().unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(cfg, covered, summary, json!({ "complexes": rows }))
}

/// `m` planted functions that differ at every vertex: `f` and its complement.
fn planted_pair(n: usize, m: usize, seed: u64) -> Vec<u64> {
    let mask = Face::range(n).bits();
    let f = GlobalFunction::random(Face::range(n), &mut stream(seed, 0)).bits;
    [f, !f & mask].into_iter().take(m).collect()
}

fn planted_table(x: &Arc<SimplicialComplex>, functions: &[u64], k: usize, seed: u64) -> Result<LocalAssignment, ExperimentError> {
    let graph = Arc::new(constraint_graph(x, 1)?);
    let inst = UgInstance::planted(graph, functions)?;
    let lifted = lift_lists(&inst, k)?;
    Ok(build_adversarial_f(x, &lifted, seed)?)
}

fn planted_adversary(cfg: &ExperimentConfig, _: &mut Vec<PlotSeries>) -> Outcome {
    let seed = cfg.run.seed;
    let m = cfg.fixture.m;
    let k = cfg.tester.k;
    let x = Arc::new(build(&cfg.complex)?);
    let functions = planted_pair(x.n(), m, mix(seed, 0));
    let table = planted_table(&x, &functions, k, mix(seed, 1))?;
    let r = run_dp_test(&x, &table, &tester_params(&cfg.tester, mix(seed, 2)))?;
    let floor = 1.0 / m as f64 - 0.05;

    let small = Arc::new(control(cfg)?);
    let domain = Face::range(small.n());
    let restricted: Vec<u64> = functions.iter().map(|f| f & domain.bits()).collect();
    let small_table = planted_table(&small, &restricted, k, mix(seed, 3))?;
    let named: Vec<(String, GlobalFunction)> = restricted
        .iter()
        .enumerate()
        .map(|(i, &f)| (format!("planted-{i}"), GlobalFunction::new(domain, f)))
        .collect();
    let audit = global_agreement_audit(&small_table, domain, cfg.tester.nu, CandidatePolicy::Exhaustive, &named)?;
    let planted_min = audit.candidates[..named.len()]
        .iter()
        .map(|c| c.agreement)
        .fold(1.0, f64::min);
    let (cap, least) = (1.0 / m as f64 + 0.1, 1.0 / m as f64 - 0.1);
    let passed = r.report.estimate >= floor && audit.best_agreement <= cap && planted_min >= least;
    verdict(
        cfg,
        passed,
        format!(
            "pass rate {:.4} (need >= {floor:.2}); best global agreement {:.4} over {} functions (need <= {cap:.2}), planted min {:.4} (need >= {least:.2})",
            r.report.estimate, audit.best_agreement, audit.evaluated, planted_min
        ),
        json!({ "test": r.report, "audit": audit, "planted_min": planted_min }),
    )
}

fn rp2_coboundary(cfg: &ExperimentConfig, _: &mut Vec<PlotSeries>) -> Outcome {
    let x = Arc::new(build(&cfg.complex)?);
    let Some(witness) = f2_cocycle_witness(&x)? else {
        return verdict(cfg, false, "no cocycle witness found".into(), json!({ "h1_dimension": 0 }));
    };
    let inst = witness.instance(0)?;
    let consistency = inst.triangle_consistency(Mode::Exact, 0, 0)?;
    let value = inst.value_exact(VALUE_EXACT_CAP)?;
    let opts = SearchOptions {
        seed: cfg.run.seed,
        ..SearchOptions::default()
    };
    let (explained, _, method) = inst.best_explanation(&opts);
    let c_hat = 1.0 - explained;
    let control_witness = f2_cocycle_witness(&Arc::new(control(cfg)?))?;
    let consistent = consistency.passes == consistency.trials;
    let passed = consistent
        && value.value < 1.0 - TIE
        && c_hat > TIE
        && method == SearchMethod::Exact
        && control_witness.is_none();
    verdict(
        cfg,
        passed,
        format!(
            "consistency {}/{}, exact value {:.4}, defect {:.4} ({:?}), control {}",
            consistency.passes,
            consistency.trials,
            value.value,
            c_hat,
            method,
            if control_witness.is_none() { "none" } else { "has a witness" }
        ),
        json!({
            "h1_dimension": witness.h1_dimension,
            "consistency": consistency,
            "value": value.value,
            "c_hat": c_hat,
            "method": method,
            "control_h1_dimension": control_witness.map_or(0, |w| w.h1_dimension),
        }),
    )
}

fn kneser_propagation(cfg: &ExperimentConfig, _: &mut Vec<PlotSeries>) -> Outcome {
    let n = cfg.complex.n.unwrap_or(0);
    let t = cfg.complex.t.unwrap_or(0);
    let m = cfg.fixture.m;
    let graph = Arc::new(kneser_graph(Face::range(n), t)?);
    let seed = cfg.run.seed;
    let mut counts = Vec::with_capacity(cfg.fixture.instances);
    let mut good = 0;
    for j in 0..cfg.fixture.instances as u64 {
        let mut rng = stream(mix(seed, 0), j);
        let g: Vec<Perm> = (0..graph.vertex_count()).map(|_| Perm::random(m, &mut rng)).collect();
        let inst = UgInstance::coboundary(graph.clone(), &g)?;
        let r = inst.value_propagate(&SearchOptions {
            seed: mix(seed, j + 1),
            ..SearchOptions::default()
        });
        let all_satisfy = r.satisfying.iter().all(|l| (inst.value(l) - 1.0).abs() < TIE);
        if (r.value - 1.0).abs() < TIE && all_satisfy && r.satisfying.len() == m {
            good += 1;
        }
        counts.push(r.satisfying.len());
    }
    verdict(
        cfg,
        good == counts.len(),
        format!("{good}/{} instances with value 1 and exactly {m} satisfying labelings", counts.len()),
        json!({ "vertices": graph.vertex_count(), "edges": graph.edges().len(), "satisfying_counts": counts }),
    )
}

const NOISE_LEVELS: [f64; 5] = [0.0, 0.02, 0.05, 0.1, 0.25];

/// Fixture `j`: two functions that differ on every `t`-face, lists in a random order per
/// vertex, matching permutations with a fraction flipped, and top lists with a
/// fraction replaced.
fn law_fixture(x: &Arc<SimplicialComplex>, j: usize, seed: u64) -> Result<(UgInstance, serde_json::Value), ExperimentError> {
    let tmax = (x.d() / 3).clamp(1, 2);
    let t = 1 + j % tmax;
    let flip_rate = NOISE_LEVELS[(j / tmax) % NOISE_LEVELS.len()];
    let top_rate = NOISE_LEVELS[(j / (tmax * NOISE_LEVELS.len())) % NOISE_LEVELS.len()];
    let mut rng = stream(seed, j as u64);
    let domain = Face::range(x.n());
    let f = GlobalFunction::random(domain, &mut rng).bits;
    let mut differ = domain.bits();
    if t > 1 && rng.gen::<bool>() {
        differ &= !(1 << rng.gen_range(0..x.n()));
    }
    let functions = [f, f ^ differ];
    let graph = Arc::new(constraint_graph(x, t)?);
    let order: Vec<Perm> = (0..graph.vertex_count()).map(|_| Perm::random(2, &mut rng)).collect();
    let lists: Vec<Vec<u64>> = graph
        .vertices()
        .iter()
        .zip(&order)
        .map(|(u, s)| (0..2).map(|i| functions[s.apply(i)] & u.bits()).collect())
        .collect();
    let mut inst = UgInstance::coboundary(graph.clone(), &order)?;
    let swap = Perm::swap(2, 0, 1);
    let mut flipped = 0;
    for e in 0..graph.edges().len() {
        if rng.gen::<f64>() < flip_rate {
            inst.set_perm(e, inst.perms()[e].then(swap));
            flipped += 1;
        }
    }
    let mut top = FaceMap::default();
    let mut replaced = 0;
    for &big in &x.level(3 * t)?.faces {
        let mut list: Vec<u64> = functions.iter().map(|f| f & big.bits()).collect();
        if rng.gen::<f64>() < top_rate {
            let fresh = loop {
                let b = random_bits(big, &mut rng);
                if !list.contains(&b) {
                    break b;
                }
            };
            list[0] = fresh;
            replaced += 1;
        }
        top.insert(big, list);
    }
    let inst = inst.with_lists(lists, Some(top))?;
    Ok((
        inst,
        json!({ "id": j, "t": t, "flip_rate": flip_rate, "top_rate": top_rate, "flipped": flipped, "replaced": replaced }),
    ))
}

fn strong_weak_law(cfg: &ExperimentConfig, plots: &mut Vec<PlotSeries>) -> Outcome {
    let x = Arc::new(build(&cfg.complex)?);
    let seed = cfg.run.seed;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut holds = 0;
    let mut nontrivial = 0;
    let mut worst_ratio: f64 = 0.0;
    for j in 0..cfg.fixture.instances {
        let (inst, mut row) = law_fixture(&x, j, mix(seed, 0))?;
        let weak = 1.0 - inst.triangle_consistency(Mode::Exact, 0, 0)?.estimate;
        let strong = 1.0 - inst.strong_consistency(Mode::Exact, 0, 0)?.estimate;
        if weak <= 3.0 * strong + TIE {
            holds += 1;
        }
        if weak > TIE {
            nontrivial += 1;
        }
        if strong > TIE {
            worst_ratio = worst_ratio.max(weak / strong);
        }
        row["weak"] = json!(weak);
        row["strong"] = json!(strong);
        points.push((strong, weak));
        rows.push(row);
    }
    plots.push(PlotSeries {
        name: "strong_vs_weak".into(),
        points,
    });
    verdict(
        cfg,
        holds == rows.len(),
        format!(
            "{holds}/{} fixtures satisfy weak <= 3 strong ({nontrivial} with weak inconsistency), largest ratio {worst_ratio:.3}",
            rows.len()
        ),
        json!({ "fixtures": rows, "holds": holds, "nontrivial": nontrivial, "worst_ratio": worst_ratio }),
    )
}

fn shortlist_recovery(cfg: &ExperimentConfig, plots: &mut Vec<PlotSeries>) -> Outcome {
    let x = build(&cfg.complex)?;
    let domain = Face::range(x.n());
    let seed = cfg.run.seed;
    let f1 = GlobalFunction::random(domain, &mut stream(mix(seed, 0), 0));
    let moved = crate::rng::random_subset(domain, cfg.fixture.distance, &mut stream(mix(seed, 0), 1));
    let f2 = f1.flip(moved);
    let planted = [f1, f2];
    let mut rng = stream(mix(seed, 1), 0);
    let noise = cfg.fixture.noise;
    let table = LocalAssignment::from_fn(&x, cfg.tester.k, |_, a| {
        if rng.gen::<f64>() < noise {
            random_bits(a, &mut rng)
        } else {
            planted[rng.gen_range(0..2)].bits & a.bits()
        }
    })?;
    let p = &cfg.pipeline;
    let params = ShortListParams {
        delta: p.delta,
        rounds: p.rounds,
        decrement: p.decrement,
        nu: p.nu,
        first_round: 0,
        eta: p.eta,
        method: AgreementSearch::Auto,
        seed: mix(seed, 2),
    };
    let out = short_list(&table, domain, &params)?;
    let nearest: Vec<(usize, f64)> = out
        .survivors
        .iter()
        .map(|(_, s)| {
            planted
                .iter()
                .enumerate()
                .map(|(i, f)| (i, distance_on(domain, s.bits, f.bits)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        })
        .collect();
    let close = nearest.iter().all(|&(_, dist)| dist <= 0.05 + TIE);
    let distinct = nearest.len() < 2 || nearest[0].0 != nearest[1].0;
    let passed = out.len() == 2 && close && distinct && out.within_bound();
    plots.push(PlotSeries {
        name: "shortlist_rounds".into(),
        points: out
            .rounds
            .accepted
            .iter()
            .map(|r| (r.round as f64, r.agreement))
            .collect(),
    });
    verdict(
        cfg,
        passed,
        format!(
            "{} survivors at distances {:?} from the planted pair, {} accepted rounds (bound {:.2})",
            out.len(),
            nearest.iter().map(|n| n.1).collect::<Vec<_>>(),
            out.rounds.accepted.len(),
            out.rounds.bound
        ),
        json!({
            "planted_distance": distance_on(domain, f1.bits, f2.bits),
            "survivors": out.survivors.iter().map(|(_, s)| s.to_string()).collect::<Vec<_>>(),
            "nearest": nearest.iter().map(|n| json!({ "planted": n.0, "distance": n.1 })).collect::<Vec<_>>(),
            "short_list": out,
        }),
    )
}

fn spectral_audit(cfg: &ExperimentConfig, _: &mut Vec<PlotSeries>) -> Outcome {
    let x = build(&cfg.complex)?;
    let tol = SpectralTolerances {
        seed: cfg.run.seed,
        ..SpectralTolerances::default()
    };
    let (i, j) = (x.d(), cfg.fixture.level);
    let walk = down_up_spectrum(&x, i, j, &tol)?;
    let target = j as f64 / i as f64;
    let links = link_expansion(&control(cfg)?, Sidedness::OneSided, &tol)?;
    let near = (walk.second_eigenvalue - target).abs() <= 0.05;
    let expanding = links.gamma <= 0.0;
    verdict(
        cfg,
        near && expanding,
        format!(
            "second eigenvalue {:.4} vs {target:.4} (tolerance 0.05, {}); one-sided link gamma {:.4} ({})",
            walk.second_eigenvalue,
            if near { "within" } else { "outside" },
            links.gamma,
            if expanding { "<= 0" } else { "> 0" }
        ),
        json!({
            "walk": walk,
            "target": target,
            "gamma": links.gamma,
            "worst_link": links.worst_link.ids(),
            "links_checked": links.links.len(),
        }),
    )
}

fn subinstance_stability(cfg: &ExperimentConfig, plots: &mut Vec<PlotSeries>) -> Outcome {
    let n = cfg.complex.n.unwrap_or(0);
    let seed = cfg.run.seed;
    let f = &cfg.fixture;
    let (csp, _) = AgreementCsp::planted(Face::range(n), cfg.tester.k, f.planted_fraction, mix(seed, 0))?;
    let full = csp.value_exact(CSP_NODE_CAP)?;
    let mut diffs = Vec::with_capacity(f.instances);
    for j in 0..f.instances as u64 {
        let sub = csp.random_restriction(f.restrict_to, &mut stream(mix(seed, 1), j));
        diffs.push(sub.value_exhaustive()?.value - full.value);
    }
    let within = diffs.iter().filter(|d| d.abs() <= 0.1).count();
    let need = (f.instances * 48).div_ceil(50);
    plots.push(PlotSeries {
        name: "restriction_gap".into(),
        points: diffs.iter().enumerate().map(|(j, &d)| (j as f64, d)).collect(),
    });
    let worst = diffs.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    verdict(
        cfg,
        within >= need,
        format!(
            "value {:.4}; {within}/{} restrictions within 0.1 (need {need}), largest gap {worst:.4}",
            full.value,
            diffs.len()
        ),
        json!({ "full": full, "gaps": diffs, "within": within, "needed": need }),
    )
}

fn decode_end_to_end(cfg: &ExperimentConfig, _: &mut Vec<PlotSeries>) -> Outcome {
    let x = Arc::new(build(&cfg.complex)?);
    let domain = Face::range(x.n());
    let seed = cfg.run.seed;
    let k = cfg.pipeline.k;
    let f = GlobalFunction::random(domain, &mut stream(mix(seed, 0), 0));
    let mut rng = stream(mix(seed, 1), 0);
    let noise = cfg.fixture.noise;
    let mut corrupted = 0;
    let table = LocalAssignment::from_fn(&x, k, |_, a| {
        if rng.gen::<f64>() < noise {
            corrupted += 1;
            random_bits(a, &mut rng)
        } else {
            f.bits & a.bits()
        }
    })?;
    let p = PipelineParams {
        seed: mix(seed, 2),
        ..cfg.pipeline.clone()
    };
    let out = decode_global(&x, &table, &p)?;
    let recovered = out.function.map(|g| distance_on(domain, g.bits, f.bits));
    let random = LocalAssignment::random(&x, k, mix(seed, 3))?;
    let control = decode_global(
        &x,
        &random,
        &PipelineParams {
            seed: mix(seed, 4),
            ..cfg.pipeline.clone()
        },
    )?;
    let first = out.stages.first().map(|s| s.stage.clone());
    let control_halt_first = control.halted_at.is_some() && control.halted_at == first;
    let passed = out.succeeded() && recovered == Some(0.0) && control_halt_first;
    verdict(
        cfg,
        passed,
        format!(
            "{}; distance to the planted function {}; random control halts at {}",
            match &out.halted_at {
                None => format!("all {} stages pass", out.stages.len()),
                Some(s) => format!("halted at {s}"),
            },
            recovered.map_or("n/a".into(), |d| d.to_string()),
            control.halted_at.as_deref().unwrap_or("nothing")
        ),
        json!({
            "faces": table.len(),
            "corrupted": corrupted,
            "planted": f.to_string(),
            "distance": recovered,
            "decode": out.to_json(),
            "control": control.to_json(),
        }),
    )
}
