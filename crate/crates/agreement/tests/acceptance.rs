//! Acceptance run: every check at its stated tolerance, one PASS/FAIL line each.
//! Oracles here are computed independently of the library code paths they check.

use std::process::ExitCode;
use std::sync::Arc;

use serde_json::Value;

use agreement::cohomology::f2_cocycle_witness;
use agreement::complex::builtin;
use agreement::experiments::{preset, run_config, RunRecord, PRESETS};
use agreement::graph::kneser_graph;
use agreement::face::Face;
use agreement::perm::Perm;

struct Check {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn run(name: &str) -> RunRecord {
    run_config(&preset(name).expect("known preset").defaults())
}

fn metrics(r: &RunRecord) -> &Value {
    &r.verdicts[0].metrics
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn completeness() -> Check {
    let r = run("completeness");
    let m = metrics(&r);
    let reports = m["reports"].as_array().cloned().unwrap_or_default();
    let exact = reports.len() == 20
        && reports
            .iter()
            .all(|x| x["mode"] == "exact" && x["passes"] == x["trials"] && f(&x["estimate"]) >= 1.0 - 1e-12);
    Check {
        id: 1,
        name: "completeness",
        passed: exact && r.wall_seconds < 10.0,
        detail: format!("{} functions accepted on every outcome: {exact}; {:.2} s (limit 10)", reports.len(), r.wall_seconds),
    }
}

fn random_soundness() -> Check {
    let r = run("random-soundness");
    let mut ok = r.wall_seconds < 30.0;
    let mut parts = Vec::new();
    for c in metrics(&r)["complexes"].as_array().cloned().unwrap_or_default() {
        let d = c["d"].as_u64().unwrap_or(0);
        // A and A' are uniform 8-sets through a fixed 2-set of D; they coincide w.p. 1/C(d-2, 6).
        let same = 1.0 / choose(d - 2, 6);
        let oracle = same + (1.0 - same) / 4.0;
        let (lo, hi) = (f(&c["report"]["ci_lo"]), f(&c["report"]["ci_hi"]));
        let trials = c["report"]["trials"].as_u64().unwrap_or(0);
        let covered = lo - 1e-12 <= oracle && oracle <= hi + 1e-12 && trials == 100_000;
        ok &= covered;
        parts.push(format!("d={d}: [{lo:.4}, {hi:.4}] vs {oracle:.4}"));
    }
    ok &= parts.len() == 2;
    Check {
        id: 2,
        name: "random-soundness",
        passed: ok,
        detail: format!("{}; {:.2} s (limit 30)", parts.join("; "), r.wall_seconds),
    }
}

fn planted_adversary() -> Check {
    let r = run("planted-adversary");
    let m = metrics(&r);
    let rate = f(&m["test"]["estimate"]);
    let best = f(&m["audit"]["best_agreement"]);
    let planted = f(&m["planted_min"]);
    let evaluated = m["audit"]["evaluated"].as_u64().unwrap_or(0);
    Check {
        id: 3,
        name: "planted-adversary",
        passed: rate >= 0.45 && best <= 0.6 && planted >= 0.4 && evaluated == 1 << 16 && r.wall_seconds < 300.0,
        detail: format!(
            "pass rate {rate:.4} >= 0.45; max agreement {best:.4} <= 0.6 over {evaluated} functions; planted {planted:.4} >= 0.4; {:.2} s",
            r.wall_seconds
        ),
    }
}

fn rp2_coboundary() -> Check {
    let r = run("rp2-coboundary");
    let m = metrics(&r);
    // Brute force over all 2^6 labelings and all 2^6 sign choices, straight from the permutations.
    let x = Arc::new(builtin::projective_plane());
    let inst = f2_cocycle_witness(&x).unwrap().unwrap().instance(0).unwrap();
    let g = inst.graph();
    let n = g.vertex_count();
    let total: f64 = g.edges().iter().map(|e| e.weight).sum();
    let mut best_value: f64 = 0.0;
    let mut best_explained: f64 = 0.0;
    for mask in 0..1u32 << n {
        let bit = |v: u32| (mask >> v & 1) as usize;
        let mut sat = 0.0;
        let mut explained = 0.0;
        for (e, edge) in g.edges().iter().enumerate() {
            let p = inst.perms()[e];
            if p.apply(bit(edge.u)) == bit(edge.v) {
                sat += edge.weight;
            }
            let gu = if bit(edge.u) == 1 { Perm::swap(2, 0, 1) } else { Perm::identity(2) };
            let gv = if bit(edge.v) == 1 { Perm::swap(2, 0, 1) } else { Perm::identity(2) };
            if p == gu.then(gv.inverse()) {
                explained += edge.weight;
            }
        }
        best_value = best_value.max(sat / total);
        best_explained = best_explained.max(explained / total);
    }
    let c_hat = 1.0 - best_explained;
    let consistent = m["consistency"]["passes"] == m["consistency"]["trials"];
    let agrees = (f(&m["value"]) - best_value).abs() < 1e-9 && (f(&m["c_hat"]) - c_hat).abs() < 1e-9;
    let control_none = m["control_h1_dimension"] == 0;
    Check {
        id: 4,
        name: "rp2-coboundary",
        passed: consistent && best_value < 1.0 && c_hat > 0.0 && agrees && control_none && r.wall_seconds < 1.0,
        detail: format!(
            "consistency {}/{}; value {best_value:.4} < 1; defect {c_hat:.4} > 0; preset matches brute force: {agrees}; complete(6,3) none: {control_none}",
            m["consistency"]["passes"], m["consistency"]["trials"]
        ),
    }
}

fn kneser_propagation() -> Check {
    let r = run("kneser-propagation");
    let counts = metrics(&r)["satisfying_counts"].as_array().cloned().unwrap_or_default();
    // A coboundary on a connected graph is satisfied exactly by fixing one label anywhere.
    let g = kneser_graph(Face::range(10), 2).unwrap();
    let connected = g.components().len() == 1;
    let all_three = counts.len() == 100 && counts.iter().all(|c| c == 3);
    Check {
        id: 5,
        name: "kneser-propagation",
        passed: r.verdicts[0].passed && connected && all_three && r.wall_seconds < 30.0,
        detail: format!(
            "{}/100 instances with value 1 and 3 labelings (graph connected: {connected}); {:.2} s",
            counts.iter().filter(|c| *c == 3).count(),
            r.wall_seconds
        ),
    }
}

fn strong_weak_law() -> Check {
    let r = run("strong-weak-law");
    let rows = metrics(&r)["fixtures"].as_array().cloned().unwrap_or_default();
    let holds = rows
        .iter()
        .filter(|x| f(&x["weak"]) <= 3.0 * f(&x["strong"]) + 1e-9)
        .count();
    let nontrivial = rows.iter().filter(|x| f(&x["weak"]) > 1e-9).count();
    Check {
        id: 6,
        name: "strong-weak-law",
        passed: rows.len() == 50 && holds == 50 && nontrivial > 0 && r.wall_seconds < 30.0,
        detail: format!("{holds}/{} fixtures with weak <= 3 strong, {nontrivial} with weak inconsistency; {:.2} s", rows.len(), r.wall_seconds),
    }
}

fn shortlist_recovery() -> Check {
    let r = run("shortlist-recovery");
    let m = metrics(&r);
    let nearest = m["nearest"].as_array().cloned().unwrap_or_default();
    let close = nearest.iter().all(|x| f(&x["distance"]) <= 0.05);
    let distinct = nearest.len() == 2 && nearest[0]["planted"] != nearest[1]["planted"];
    let accepted = m["short_list"]["accepted"].as_array().map_or(0, |a| a.len());
    let bound = f(&m["short_list"]["bound"]);
    Check {
        id: 7,
        name: "shortlist-recovery",
        passed: nearest.len() == 2 && close && distinct && accepted as f64 <= bound && r.wall_seconds < 120.0,
        detail: format!(
            "{} survivors, each within 0.05 of a distinct planted function: {}; {accepted} accepted <= {bound:.2}; planted distance {:.4}",
            nearest.len(),
            close && distinct,
            f(&m["planted_distance"])
        ),
    }
}

fn spectral_audit() -> Check {
    let r = run("spectral-audit");
    let m = metrics(&r);
    let lambda = f(&m["walk"]["second_eigenvalue"]);
    // Down-up walk 4 -> 2 -> 4 on complete(20, 4): the first nontrivial Johnson eigenvalue.
    let johnson = (2.0 / 4.0) * (20.0 - 4.0) / (20.0 - 2.0);
    // Links of complete(10, 4) are complete graphs; the largest is K_10.
    let gamma_oracle = -1.0 / 9.0;
    let gamma = f(&m["gamma"]);
    let solver_ok = (lambda - johnson).abs() < 1e-9 && (gamma - gamma_oracle).abs() < 1e-9;
    let near = (lambda - 0.5).abs() <= 0.05;
    Check {
        id: 8,
        name: "spectral-audit",
        passed: near && gamma <= 0.0 && solver_ok && r.wall_seconds < 60.0,
        detail: format!(
            "second eigenvalue {lambda:.6} vs 0.5 +- 0.05 (closed form {johnson:.6}, solver agrees: {solver_ok}); gamma {gamma:.4} <= 0"
        ),
    }
}

fn subinstance_stability() -> Check {
    let r = run("subinstance-stability");
    let m = metrics(&r);
    let gaps = m["gaps"].as_array().cloned().unwrap_or_default();
    let within = gaps.iter().filter(|g| f(g).abs() <= 0.1).count();
    Check {
        id: 9,
        name: "subinstance-stability",
        passed: gaps.len() == 50 && within >= 48 && r.wall_seconds < 300.0,
        detail: format!(
            "value {:.4} on 32 vertices; {within}/{} half restrictions within 0.1; {:.2} s",
            f(&m["full"]["value"]),
            gaps.len(),
            r.wall_seconds
        ),
    }
}

fn decode_end_to_end() -> Check {
    let r = run("decode-end-to-end");
    let m = metrics(&r);
    let stages = m["decode"]["stages"].as_array().cloned().unwrap_or_default();
    let green = !stages.is_empty() && stages.iter().all(|s| s["status"] == "pass");
    let exact = m["distance"].as_f64() == Some(0.0) && m["decode"]["function"] == m["planted"];
    let control_stages = m["control"]["stages"].as_array().cloned().unwrap_or_default();
    let halted_first = control_stages.len() == 1 && m["control"]["halted_at"] == stages.first().map_or(Value::Null, |s| s["stage"].clone());
    Check {
        id: 10,
        name: "decode-end-to-end",
        passed: green && exact && halted_first && r.wall_seconds < 300.0,
        detail: format!(
            "{} stages green: {green}; recovered planted function exactly: {exact}; random control halts at stage 1 ({}): {halted_first}; {:.2} s",
            stages.len(),
            m["control"]["halted_at"],
            r.wall_seconds
        ),
    }
}

fn determinism() -> Check {
    let mut differing = Vec::new();
    for p in PRESETS {
        let a = run(p.name()).report_json();
        let b = run(p.name()).report_json();
        if a != b {
            differing.push(p.name());
        }
    }
    Check {
        id: 11,
        name: "determinism",
        passed: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("all {} presets reproduce report.json byte for byte", PRESETS.len())
        } else {
            format!("reports differ for {}", differing.join(", "))
        },
    }
}

/// The spectral threshold sits below the exact second eigenvalue of the walk, so this
/// criterion fails on every correct implementation. Any other change of outcome fails the run.
const KNOWN_FAILURES: &[usize] = &[8];

fn main() -> ExitCode {
    let checks = [
        completeness,
        random_soundness,
        planted_adversary,
        rp2_coboundary,
        kneser_propagation,
        strong_weak_law,
        shortlist_recovery,
        spectral_audit,
        subinstance_stability,
        decode_end_to_end,
        determinism,
    ];
    let mut failed = 0;
    let mut unexpected = Vec::new();
    for check in checks {
        let c = check();
        println!(
            "{} criterion {:>2} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.detail
        );
        failed += usize::from(!c.passed);
        if c.passed == KNOWN_FAILURES.contains(&c.id) {
            unexpected.push(c.id);
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: outcome changed for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
