use icb_core::attention::{associated_eval, HyperParams, Mask, Mode, NetworkWeights, Readout};
use icb_core::linalg::Matrix;
use icb_core::seprank::*;

const FROZEN_SEQUENTIAL: [usize; 4] = [19, 16, 12, 5];
const FROZEN_IN_CONTEXT: usize = 24;
const FROZEN_CERT: usize = 12;

fn toy(eta: f64) -> NetworkWeights {
    let h = HyperParams::new(2, 2, 4, 2, 8, eta).unwrap();
    NetworkWeights::random(h, 0.3, 0.7, 11).unwrap()
}

fn spec(mode: Mode, z: usize, w: &NetworkWeights) -> GridSpec {
    GridSpec {
        a_templates: sample_templates(z, 4, TemplateKind::Sphere, 3),
        b_templates: sample_templates(z, 4, TemplateKind::Sphere, 4),
        s1: vec![2, 5],
        s2: vec![7, 1],
        mode,
        readout: Readout::last(&w.hyper),
        mask: Mask::Full,
    }
}

#[test]
fn gap_experiment_matches_frozen_ranks() {
    let rows = run_gap_experiment(&GapConfig::default()).unwrap();
    assert_eq!(rows.len(), 8);
    let seq: Vec<usize> = rows.iter().filter(|r| r.mode == Mode::Sequential).map(|r| r.spectral_rank).collect();
    let ic: Vec<&GapRow> = rows.iter().filter(|r| r.mode == Mode::InContext).collect();
    assert_eq!(seq, FROZEN_SEQUENTIAL);
    for (r, s) in ic.iter().zip(&seq) {
        assert_eq!(r.spectral_rank, FROZEN_IN_CONTEXT);
        assert_eq!(r.cert_rank, FROZEN_CERT);
        assert!(*s <= r.spectral_rank);
    }
    // nonincreasing as η shrinks, with one unit of slack
    assert!(seq.windows(2).all(|w| w[1] <= w[0] + 1));
    for r in &rows {
        assert!(r.cert_rank <= r.spectral_rank);
        assert!(r.top_singular_values.len() <= 8);
        assert!(r.top_singular_values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn zero_learning_rate_gives_rank_at_most_one() {
    let w = toy(0.0);
    let m = build_grid_matrix(&w, &spec(Mode::Sequential, 24, &w)).unwrap();
    assert!(spectral_rank_estimate(&m, None).unwrap().rank <= 1);
}

#[test]
fn grid_entries_match_pointwise_evaluation() {
    let w = toy(0.1);
    for mode in [Mode::InContext, Mode::Sequential] {
        let s = spec(mode, 5, &w);
        let m = build_grid_matrix(&w, &s).unwrap();
        for (i, a) in s.a_templates.iter().enumerate() {
            for (j, b) in s.b_templates.iter().enumerate() {
                let v = associated_eval(&w, &s.s1, &s.s2, a, b, mode, s.readout, s.mask).unwrap();
                assert_eq!(m[(i, j)].to_bits(), v.to_bits());
            }
        }
    }
}

#[test]
fn grid_is_independent_of_thread_count() {
    let w = toy(0.01);
    let s = spec(Mode::Sequential, 16, &w);
    let build = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| build_grid_matrix(&w, &s).unwrap())
    };
    let one = build(1);
    let four = build(4);
    assert!(one.as_slice().iter().zip(four.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn identity_certifies_its_size() {
    for n in [1usize, 4, 16] {
        let c = eps_rank_certificate(&Matrix::identity(n), 1.0).unwrap();
        assert!(c.rank >= n);
        assert_eq!(c.certified_eps, 1.0 / (2.0 * n as f64));
    }
}

#[test]
fn unit_diagonal_count_on_identity() {
    let c = unit_diagonal_count(&Matrix::identity(6)).unwrap();
    assert!(c.holds);
}

#[test]
fn sequential_bound_at_unit_rate_is_in_context_bound() {
    for (l, d, h) in [(1, 4, 2), (3, 8, 4), (6, 16, 1)] {
        assert_eq!(bound_sequential(l, d, 1.0).unwrap(), bound_in_context(l, d, h).unwrap().value);
    }
}

#[test]
fn cube_templates_lie_in_the_cube() {
    let t = sample_templates(50, 6, TemplateKind::Cube, 2);
    assert!(t.iter().flatten().all(|x| (-1.0..=1.0).contains(x)));
    let s = sample_templates(50, 6, TemplateKind::Sphere, 2);
    assert!(s.iter().all(|v| (v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
}
