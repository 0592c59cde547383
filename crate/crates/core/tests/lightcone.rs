use hubbard_cone::evolution::Propagator;
use hubbard_cone::lightcone::report::SweepCell;
use hubbard_cone::lightcone::{
    boundary_defect, commutator_sweep, factorization_sweep, factorize, inequality_audit, signaling_experiment,
    transport_sweep, velocity_fit, ConeConfig, ConeConfigDoc, SweepReport,
};
use hubbard_cone::operators::{build_hamiltonian, hop_operator, local_observable, number_operator};
use hubbard_cone::sparse::inner;
use hubbard_cone::{Error, FockBasis, HamiltonianParams, LatticeSpec, SiteSet};
use serde_json::{json, Value};

fn resolve(v: Value) -> ConeConfig {
    serde_json::from_value::<ConeConfigDoc>(v).unwrap().resolve().unwrap()
}

fn transport_doc(hopping: f64) -> Value {
    json!({
        "lattice": { "kind": "chain", "length": 9, "hopping": hopping },
        "g": 2.0,
        "b": 1.5,
        "initial_state": { "fock": [ { "site": [-1], "n": 1 }, { "site": [1], "n": 1 } ] },
        "rho_grid": [1.5, 2.5, 3.5],
        "t_grid": { "start": 0.0, "stop": 3.0, "step": 0.05 }
    })
}

fn commutator_doc(center: f64, a: i64, b: i64, sign: i64) -> Value {
    json!({
        "lattice": { "kind": "chain", "length": 11 },
        "g": 2.0,
        "center": [center],
        "b": 0.5,
        "initial_state": { "superposition": [
            { "amplitude": [1.0, 0.0], "fock": [ { "site": [a], "n": 1 }, { "site": [5 * sign], "n": 1 } ] },
            { "amplitude": [0.0, 1.0], "fock": [ { "site": [a], "n": 2 } ] }
        ] },
        "observable_a": { "site": [a] },
        "observable_b": { "site": [b] },
        "rho_grid": [1.5, 2.5, 3.5],
        "t_grid": [0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 3.0]
    })
}

#[test]
fn factorize_full_cut_is_identity() {
    let basis = FockBasis::enumerate(4, 2).unwrap();
    let fact = factorize(&basis, &SiteSet::all(4)).unwrap();
    assert_eq!(fact.forward(), (0..basis.len()).collect::<Vec<_>>().as_slice());
    let nonempty: Vec<usize> = fact.blocks().iter().filter(|b| !b.is_empty()).map(|b| b.k).collect();
    assert_eq!(nonempty, vec![2]);
}

#[test]
fn factorize_two_sites_one_particle() {
    let basis = FockBasis::enumerate(2, 1).unwrap();
    let fact = factorize(&basis, &SiteSet::from_indices(2, [0]).unwrap()).unwrap();
    assert_eq!(fact.block_sizes(), vec![(1, 1), (1, 1)]);
    // |1,0⟩ lands in the k = 1 block, |0,1⟩ in k = 0.
    let idx = |occ: &[u32]| basis.rank_slice(occ).unwrap();
    assert_eq!(fact.forward()[idx(&[1, 0])], 0);
    assert_eq!(fact.forward()[idx(&[0, 1])], 1);
}

#[test]
fn factorize_four_sites_two_particles() {
    let basis = FockBasis::enumerate(4, 2).unwrap();
    let fact = factorize(&basis, &SiteSet::from_indices(4, [0, 1]).unwrap()).unwrap();
    let sizes: Vec<usize> = fact.blocks().iter().map(|b| b.len()).collect();
    assert_eq!(sizes, vec![3, 4, 3]);
    assert_eq!(fact.len(), 10);
    assert!(fact.is_bijection());
    let inv = fact.inverse();
    assert!(fact.forward().iter().enumerate().all(|(i, &f)| inv[f] == i));
}

#[test]
fn defect_vanishes_without_hopping() {
    let spec = LatticeSpec::chain(5, 0.0).unwrap();
    let basis = FockBasis::enumerate(5, 2).unwrap();
    assert_eq!(boundary_defect(&spec, &basis, &[0.0], 1.5).unwrap().max_abs(), 0.0);
}

#[test]
fn chain_defect_is_single_bond() {
    let spec = LatticeSpec::chain(5, 0.8).unwrap();
    let basis = FockBasis::enumerate(5, 2).unwrap();
    // Sites at −2..2; the ball of radius 1 around −1.5 keeps −2 and −1,
    // so only the bond (−1, 0) crosses.
    let d = boundary_defect(&spec, &basis, &[-1.5], 1.0).unwrap();
    let (x, y) = (spec.site_index(&[-1]).unwrap(), spec.site_index(&[0]).unwrap());
    let expected = hop_operator(&basis, x, y).add(&hop_operator(&basis, y, x)).unwrap().scale((0.8).into());
    assert!(d.max_abs_diff(&expected).unwrap() < 1e-15);
}

#[test]
fn long_range_defect_matches_brute_force() {
    let spec = LatticeSpec::power_law_chain(6, 1.0, 4.0).unwrap();
    let basis = FockBasis::enumerate(6, 2).unwrap();
    let params = HamiltonianParams::new(1.7, 0.3).unwrap();
    let cut = spec.ball(&[0.0], 1.5);
    let fact = factorize(&basis, &cut).unwrap();
    let u = fact.unitary();
    let h = build_hamiltonian(&spec, &basis, params, None).unwrap();
    let brute = fact
        .decoupled_hamiltonian(&spec, params)
        .unwrap()
        .matmul(&u)
        .unwrap()
        .sub(&u.matmul(&h).unwrap())
        .unwrap();
    let defect = u.matmul(&boundary_defect(&spec, &basis, &[0.0], 1.5).unwrap()).unwrap();
    assert!(brute.max_abs_diff(&defect).unwrap() < 1e-10);
    assert!(defect.max_abs() > 0.0);
}

#[test]
fn transport_starts_at_zero_and_decreases_in_rho() {
    let r = transport_sweep(&resolve(transport_doc(1.0))).unwrap();
    assert!(r.cells.iter().filter(|c| c.t == 0.0).all(|c| c.value == 0.0));
    let rhos = r.rhos();
    let per_t = rhos.len();
    for row in r.cells.chunks(per_t) {
        assert!(row.windows(2).all(|w| w[1].value <= w[0].value + 1e-14));
    }
    assert!(r.passed());
    assert_eq!(r.cells.len(), 61 * 3);
}

#[test]
fn transport_without_hopping_stays_put() {
    let r = transport_sweep(&resolve(transport_doc(0.0))).unwrap();
    assert!(r.cells.iter().all(|c| c.value == 0.0));
    assert_eq!(r.fitted_velocity, Some(0.0));
}

#[test]
fn transport_rejects_particles_outside_b() {
    let mut doc = transport_doc(1.0);
    doc["initial_state"] = json!({ "fock": [ { "site": [2], "n": 2 } ] });
    assert!(matches!(transport_sweep(&resolve(doc)), Err(Error::InvalidConfig(_))));
}

#[test]
fn mirrored_transport_is_recorded_and_small_outside_the_cone() {
    let r = transport_sweep(&resolve(transport_doc(1.0))).unwrap();
    let m = r.companion.as_deref().unwrap();
    assert_eq!(m.cells.len(), r.cells.len());
    assert!(m.cells.iter().filter(|c| c.t == 0.0).all(|c| c.value == 0.0));
    assert!(m.passed());
}

#[test]
fn commutator_vanishes_at_time_zero() {
    let r = commutator_sweep(&resolve(commutator_doc(-3.0, -3, 5, 1))).unwrap();
    assert!(r.cells.iter().filter(|c| c.t == 0.0).all(|c| c.value == 0.0));
    assert!(r.passed());
}

#[test]
fn commutator_with_function_of_n_vanishes() {
    let cfg = resolve(commutator_doc(-3.0, -3, 5, 1));
    let basis = cfg.basis().unwrap();
    let prop = Propagator::new(&build_hamiltonian(&cfg.spec, &basis, cfg.params, None).unwrap()).unwrap();
    let phi = cfg.initial_state.build(&cfg.spec, &basis).unwrap();
    let a = local_observable(&basis, cfg.spec.site_index(&[-3]).unwrap(), |n| n as f64).unwrap();
    let n_op = number_operator(&basis);
    for t in [0.5, 1.0, 2.5] {
        let left = prop.propagate(&phi, -t).unwrap();
        let right = prop.propagate(&phi.apply(&n_op).unwrap(), -t).unwrap().apply(&a).unwrap();
        assert!((2.0 * inner(left.amplitudes(), right.amplitudes()).im).abs() < 1e-12);
    }
}

#[test]
fn commutator_rejects_state_in_annulus() {
    let mut doc = commutator_doc(-3.0, -3, 5, 1);
    doc["initial_state"] = json!({ "fock": [ { "site": [-3], "n": 1 }, { "site": [0], "n": 1 } ] });
    assert!(matches!(commutator_sweep(&resolve(doc)), Err(Error::InvalidConfig(_))));
}

#[test]
fn commutator_rejects_b_inside_outer_radius() {
    let doc = commutator_doc(-3.0, -3, 2, 1);
    assert!(matches!(commutator_sweep(&resolve(doc)), Err(Error::InvalidConfig(_))));
}

#[test]
fn reflection_with_swapped_supports_gives_same_values() {
    let left = commutator_sweep(&resolve(commutator_doc(-3.0, -3, 5, 1))).unwrap();
    let right = commutator_sweep(&resolve(commutator_doc(3.0, 3, -5, -1))).unwrap();
    assert_eq!(left.cells.len(), right.cells.len());
    for (l, r) in left.cells.iter().zip(&right.cells) {
        assert!((l.value - r.value).abs() < 1e-10, "{l:?} vs {r:?}");
    }
    let mut doc = transport_doc(1.0);
    doc["initial_state"] = json!({ "fock": [ { "site": [-1], "n": 1 }, { "site": [0], "n": 1 } ] });
    let a = transport_sweep(&resolve(doc.clone())).unwrap();
    doc["initial_state"] = json!({ "fock": [ { "site": [1], "n": 1 }, { "site": [0], "n": 1 } ] });
    let b = transport_sweep(&resolve(doc)).unwrap();
    for (l, r) in a.cells.iter().zip(&b.cells) {
        assert!((l.value - r.value).abs() < 1e-10);
    }
}

#[test]
fn remainder_vanishes_at_time_zero_and_without_hopping() {
    let r = factorization_sweep(&resolve(commutator_doc(-3.0, -3, 5, 1))).unwrap();
    assert!(r.cells.iter().filter(|c| c.t == 0.0).all(|c| c.value == 0.0));
    assert!(r.passed());

    let mut doc = commutator_doc(-3.0, -3, 5, 1);
    doc["lattice"]["hopping"] = json!(0.0);
    let r = factorization_sweep(&resolve(doc)).unwrap();
    assert!(r.cells.iter().all(|c| c.value < 1e-12));
}

#[test]
fn signaling_linearizes_with_quadratic_residual() {
    let mut doc = commutator_doc(-3.0, -3, 5, 1);
    doc["r_grid"] = json!([0.1, 0.05, 0.025, 0.0125, 0.0]);
    let r = signaling_experiment(&resolve(doc)).unwrap();
    assert!(r.passed(), "{}", r.to_csv());
    for c in &r.cells {
        if c.rho == 0.0 {
            assert_eq!(c.value, 0.0);
        }
        if c.t == 0.0 {
            assert!(c.value.abs() < 1e-15);
        }
    }
}

#[test]
fn inequality_starts_tight_and_holds() {
    let doc = json!({
        "lattice": { "kind": "chain", "length": 9 },
        "g": 2.0, "b": 1.5, "a": 2.0, "c": 3.0, "v": 2.5, "s": 1.0,
        "initial_state": { "fock": [ { "site": [0], "n": 1 }, { "site": [1], "n": 1 } ] },
        "t_grid": { "start": 0.0, "stop": 1.0, "step": 0.1 }
    });
    let r = inequality_audit(&resolve(doc.clone())).unwrap();
    assert!(r.passed(), "{}", r.to_csv());
    let first = r.rows_for("inequality").next().unwrap();
    assert_eq!(first.param, 0.0);
    assert!(first.value <= first.bound.unwrap());
    let growth = r.rows_for("integrated-estimate").next().unwrap();
    assert_eq!(growth.value, 0.0);
    assert!(r.extras["fitted_multiplier"] <= 10.0);

    let mut frozen = doc.clone();
    frozen["lattice"]["hopping"] = json!(0.0);
    frozen["c"] = json!(1.0);
    frozen["v"] = json!(0.5);
    let r = inequality_audit(&resolve(frozen)).unwrap();
    assert!(r.rows_for("inequality").all(|row| row.value == 0.0));

    let mut short = doc;
    short["s"] = json!(0.5);
    assert!(matches!(inequality_audit(&resolve(short)), Err(Error::InvalidConfig(_))));
}

fn synthetic(columns: &[(f64, &[f64])]) -> SweepReport {
    let mut r = SweepReport::new("transport", 2.0);
    let len = columns[0].1.len();
    for i in 0..len {
        for &(rho, vals) in columns {
            r.cells.push(SweepCell { t: i as f64 * 0.5, rho, value: vals[i], bound: None, pass: None });
        }
    }
    r
}

#[test]
fn velocity_fit_reads_arrivals() {
    let r = synthetic(&[(1.0, &[0.0, 1.0, 1.0, 1.0]), (2.0, &[0.0, 0.0, 1.0, 1.0]), (3.0, &[0.0, 0.0, 0.0, 1.0])]);
    // Arrivals at 0.25, 0.75, 1.25 for level 0.5: slope 2.
    assert!((velocity_fit(&r, 0.5).unwrap() - 2.0).abs() < 1e-12);
    let sparse = synthetic(&[(1.0, &[0.0, 1.0]), (2.0, &[0.0, 0.0])]);
    assert!(matches!(velocity_fit(&sparse, 0.5), Err(Error::InsufficientData(_))));
    let frozen = synthetic(&[(1.0, &[0.0, 0.0]), (2.0, &[0.0, 0.0])]);
    assert_eq!(velocity_fit(&frozen, 0.5).unwrap(), 0.0);
}

#[test]
fn doubling_hopping_doubles_the_front_speed() {
    let slow = transport_sweep(&resolve(transport_doc(1.0))).unwrap().fitted_velocity.unwrap();
    let fast = transport_sweep(&resolve(transport_doc(2.0))).unwrap().fitted_velocity.unwrap();
    assert!((fast / slow / 2.0 - 1.0).abs() < 0.2, "{slow} {fast}");
}
