use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use agreement::adversary::{build_adversarial_f, lift_lists};
use agreement::assignment::{distance_on, GlobalFunction, LocalAssignment};
use agreement::complex::SimplicialComplex;
use agreement::csp::AgreementCsp;
use agreement::dp_test::{run_dp_test, DpParams};
use agreement::experiments::{ExperimentConfig, PRESETS};
use agreement::face::Face;
use agreement::graph::{constraint_graph, kneser_graph};
use agreement::linalg::symmetric_eigen;
use agreement::list_decoder::eta_cover;
use agreement::perm::Perm;
use agreement::rng::{random_subset, rng_from, stream};
use agreement::spectral::{down_up_spectrum, down_up_walk, SpectralTolerances};
use agreement::ug::{SearchOptions, UgInstance};

fn random_pure(n: usize, d: usize, facets: usize, seed: u64) -> SimplicialComplex {
    let mut rng = rng_from(seed);
    let all: Vec<Face> = (0..facets).map(|_| random_subset(Face::range(n), d, &mut rng)).collect();
    SimplicialComplex::from_facets(n, &all).unwrap()
}

fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pushing_a_level_down_reproduces_the_lower_measure(
        n in 5usize..10, d in 2usize..5, facets in 1usize..12, seed in any::<u64>()
    ) {
        let x = random_pure(n, d.min(n), facets, seed);
        let d = x.d();
        for j in 1..=d {
            let upper = x.level(j).unwrap();
            for i in 0..j {
                let lower = x.level(i).unwrap();
                let mut pushed = vec![0.0; lower.len()];
                for (face, w) in upper.faces.iter().zip(upper.weights()) {
                    let share = w / choose(j, i);
                    for sub in face.subsets(i) {
                        pushed[lower.index_of(sub).expect("downward closed")] += share;
                    }
                }
                for (p, q) in pushed.iter().zip(lower.weights()) {
                    prop_assert!((p - q).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn link_measures_are_conditional_measures(
        n in 5usize..9, facets in 1usize..10, seed in any::<u64>(), pick in any::<u64>()
    ) {
        let x = random_pure(n, 3, facets, seed);
        let base = x.level(1).unwrap();
        let face = base.faces[(pick % base.len() as u64) as usize];
        let link = x.link(face).unwrap();
        for i in 1..=link.d() {
            let inner = link.level(i).unwrap();
            let outer = x.level(i + 1).unwrap();
            let total: f64 = inner.faces.iter().map(|j| outer.weight_of(j.union(face))).sum();
            for (j, w) in inner.faces.iter().zip(inner.weights()) {
                prop_assert!((w - outer.weight_of(j.union(face)) / total).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dense_and_power_second_eigenvalues_agree(
        n in 6usize..10, facets in 3usize..14, seed in any::<u64>()
    ) {
        let x = random_pure(n, 4.min(n), facets, seed);
        let dense = down_up_spectrum(&x, 3, 1, &SpectralTolerances::default()).unwrap();
        let tol = SpectralTolerances { dense_cap: 1, ..SpectralTolerances::default() };
        let power = down_up_spectrum(&x, 3, 1, &tol).unwrap();
        prop_assert!((dense.second_eigenvalue - power.second_eigenvalue).abs() <= 1e-6);
    }

    #[test]
    fn direct_products_pass_exactly(seed in any::<u64>()) {
        let x = SimplicialComplex::complete(12, 6).unwrap();
        let f = GlobalFunction::random(Face::range(12), &mut rng_from(seed));
        let table = LocalAssignment::direct_product(&x, 4, &f).unwrap();
        let r = run_dp_test(&x, &table, &DpParams::exact(4, 2)).unwrap();
        prop_assert_eq!(r.report.passes, r.report.trials);
    }

    #[test]
    fn agreement_grows_with_tolerance(seed in any::<u64>(), flips in 0usize..3) {
        let x = SimplicialComplex::complete(9, 5).unwrap();
        let domain = Face::range(9);
        let mut rng = rng_from(seed);
        let f = GlobalFunction::random(domain, &mut rng);
        let table = LocalAssignment::from_fn(&x, 5, |_, a| {
            let noise = (0..flips).fold(0, |acc, _| acc | 1 << rng.gen_range(0..9));
            (f.bits ^ noise) & a.bits()
        }).unwrap();
        let mut last = -1.0;
        for step in 0..=5 {
            let m = table.agr_set(&f, step as f64 / 5.0).measure;
            prop_assert!(m >= last - 1e-12);
            last = m;
        }
        prop_assert!((last - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_and_exact_tests_agree(seed in any::<u64>()) {
        let x = random_pure(8, 4, 6, seed);
        let table = LocalAssignment::random(&x, 3, seed ^ 7).unwrap();
        let exact = run_dp_test(&x, &table, &DpParams::exact(3, 1)).unwrap().report.estimate;
        let trials = 20_000;
        let mc = run_dp_test(&x, &table, &DpParams::monte_carlo(3, 1, trials, seed)).unwrap().report;
        let sd = (exact * (1.0 - exact) / trials as f64).sqrt();
        prop_assert!((mc.estimate - exact).abs() <= 4.0 * sd + 1e-3);
    }

    #[test]
    fn kneser_coboundaries_propagate_without_contradiction(
        m in 2usize..5, k in 5usize..13, two in any::<bool>(), seed in any::<u64>()
    ) {
        let t = if two && k >= 10 { 2 } else { 1 };
        let g = Arc::new(kneser_graph(Face::range(k), t).unwrap());
        let mut rng = rng_from(seed);
        let labels: Vec<Perm> = (0..g.vertex_count()).map(|_| Perm::random(m, &mut rng)).collect();
        let inst = UgInstance::coboundary(g.clone(), &labels).unwrap();
        let r = inst.value_propagate(&SearchOptions { seed, ..SearchOptions::default() });
        prop_assert_eq!(r.contradictions, 0);
        prop_assert!((r.value - 1.0).abs() < 1e-12);
        // Closed walks of length 3 to 5 compose to the identity.
        for len in 3..=5 {
            for _ in 0..50 {
                let start = rng.gen_range(0..g.vertex_count());
                let mut walk = vec![start];
                for _ in 1..len {
                    let nb = g.neighbors(*walk.last().unwrap());
                    walk.push(nb[rng.gen_range(0..nb.len())].0 as usize);
                }
                let Some(close) = inst.pi(walk[len - 1], start) else { continue };
                let mut total = Perm::identity(m);
                for w in walk.windows(2) {
                    total = total.then(inst.pi(w[0], w[1]).unwrap());
                }
                prop_assert!(total.then(close).is_identity());
            }
        }
    }

    #[test]
    fn exact_and_propagated_defects_agree_on_small_graphs(seed in any::<u64>(), flips in 0usize..6) {
        let x = Arc::new(SimplicialComplex::complete(6, 3).unwrap());
        let g = Arc::new(constraint_graph(&x, 1).unwrap());
        let mut rng = rng_from(seed);
        let mut inst = UgInstance::identity(g.clone(), 2).unwrap();
        for _ in 0..flips {
            let e = rng.gen_range(0..g.edges().len());
            inst.set_perm(e, inst.perms()[e].then(Perm::swap(2, 0, 1)));
        }
        let exact = inst.best_explanation(&SearchOptions::default()).0;
        let propagated = inst
            .best_explanation(&SearchOptions { coboundary_cap: 0, seed, ..SearchOptions::default() })
            .0;
        prop_assert!((exact - propagated).abs() < 1e-12);
    }

    #[test]
    fn planted_pair_passes_at_the_mixture_rate(seed in any::<u64>()) {
        let x = Arc::new(SimplicialComplex::complete(10, 5).unwrap());
        let mask = Face::range(10).bits();
        let f = GlobalFunction::random(Face::range(10), &mut rng_from(seed)).bits;
        let g = Arc::new(constraint_graph(&x, 1).unwrap());
        let inst = UgInstance::planted(g, &[f, !f & mask]).unwrap();
        let lifted = lift_lists(&inst, 5).unwrap();
        let table = build_adversarial_f(&x, &lifted, seed).unwrap();
        let r = run_dp_test(&x, &table, &DpParams::exact(5, 2)).unwrap();
        // k = d: both sides see the same face.
        prop_assert_eq!(r.report.passes, r.report.trials);
        let y = Arc::new(SimplicialComplex::complete(10, 7).unwrap());
        let gy = Arc::new(constraint_graph(&y, 1).unwrap());
        let lifted = lift_lists(&UgInstance::planted(gy, &[f, !f & mask]).unwrap(), 5).unwrap();
        let table = build_adversarial_f(&y, &lifted, seed).unwrap();
        let r = run_dp_test(&y, &table, &DpParams::exact(5, 2)).unwrap();
        // Same face w.p. 1/C(5,3); otherwise the two picks match w.p. 1/2 and complements never agree.
        let same = 1.0 / choose(5, 3);
        let expected = same + (1.0 - same) / 2.0;
        prop_assert!((r.report.estimate - expected).abs() <= 0.05);
    }

    #[test]
    fn lifting_commutes_with_restriction(seed in any::<u64>()) {
        let x = Arc::new(SimplicialComplex::complete(10, 6).unwrap());
        let mask = Face::range(10).bits();
        let f = GlobalFunction::random(Face::range(10), &mut rng_from(seed)).bits;
        let g = Arc::new(constraint_graph(&x, 1).unwrap());
        let inst = UgInstance::planted(g, &[f, !f & mask]).unwrap();
        let big = lift_lists(&inst, 6).unwrap();
        let small = lift_lists(&inst, 5).unwrap();
        let mut rng = stream(seed, 1);
        for _ in 0..100 {
            let i = rng.gen_range(0..big.faces.len());
            let a = big.faces[i];
            let b = random_subset(a, 5, &mut rng);
            let j = small.faces.iter().position(|&c| c == b).unwrap();
            let mut down: Vec<u64> = big.lists[i].as_ref().unwrap().iter().map(|v| v & b.bits()).collect();
            let mut want = small.lists[j].clone().unwrap();
            down.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(down, want);
        }
    }

    #[test]
    fn every_candidate_is_covered(points in prop::collection::vec((0u64..1 << 12, 0.0f64..1.0), 0..30), eta in 0.0f64..0.5) {
        let domain = Face::range(12);
        let cover = eta_cover(domain, &points, eta);
        for &(p, _) in &points {
            prop_assert!(cover.functions().iter().any(|&c| distance_on(domain, p, c) <= eta + 1e-12));
        }
    }

    #[test]
    fn branch_and_bound_finds_the_optimum(seed in any::<u64>(), n in 8usize..14, k in 2usize..5, planted in 0.0f64..1.0) {
        let (csp, _) = AgreementCsp::planted(Face::range(n), k, planted, seed).unwrap();
        let a = csp.value_exhaustive().unwrap();
        let b = csp.value_exact(u64::MAX).unwrap();
        prop_assert_eq!(a.satisfied, b.satisfied);
    }

    #[test]
    fn configurations_round_trip(
        which in 0usize..10, k in 1usize..8, s in 0usize..8, seed in any::<u64>(), trials in 1u64..1_000_000, noise in 0.0f64..1.0
    ) {
        let mut cfg = PRESETS[which].defaults();
        cfg.tester.k = k;
        cfg.tester.s = s;
        cfg.tester.trials = trials;
        cfg.fixture.noise = noise;
        cfg.run.seed = seed;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn complete_down_up_spectra_lie_in_the_unit_interval() {
    for (n, d, j) in [(6, 3, 1), (7, 3, 2), (8, 4, 2), (9, 4, 1), (8, 5, 3)] {
        let x = SimplicialComplex::complete(n, d).unwrap();
        let walk = down_up_walk(&x, d, j).unwrap();
        let eig = symmetric_eigen(&walk.symmetrized()).unwrap();
        for v in eig.values {
            assert!((-1e-9..=1.0 + 1e-9).contains(&v), "complete({n},{d}) j={j}: {v}");
        }
    }
}
