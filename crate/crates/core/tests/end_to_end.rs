use approx::assert_abs_diff_eq;
use weakkam::aubry::{aubry_set, peierls_barrier, AubryLabel, DEFAULT_ETA};
use weakkam::critical::{check_dominated, critical_value, weak_kam_solution};
use weakkam::dynamics::{chain_graph, chain_recurrent_set, compare_aubry_chain};
use weakkam::grid::GridTorus;
use weakkam::kernel::ActionKernel;
use weakkam::model::{mane_lagrangian, potential_lagrangian, Potential, VectorField};

fn pendulum_kernel(n: usize) -> ActionKernel {
    let l = potential_lagrangian(Potential::cosine(1.0, 1.0, None), 1);
    ActionKernel::build(&l, GridTorus::new(1, n).unwrap(), 0.25, 0.5).unwrap()
}

#[test]
fn pendulum_solution_is_the_barrier_from_the_aubry_point() {
    let k = pendulum_kernel(256);
    let cv = critical_value(&k).unwrap();
    let w = weak_kam_solution(&k, cv.c, &vec![0.0; 256], 1e-10, 0).unwrap();
    let b = peierls_barrier(&k, &cv).unwrap();
    let column = b.row(0);
    assert_eq!(w.u[0], 0.0);
    for y in 0..256 {
        assert_abs_diff_eq!(w.u[y], column[y], epsilon = 1e-8);
    }
    assert!(check_dominated(&w.u, &k, cv.c).max_violation <= 1e-9);
}

#[test]
fn pendulum_aubry_point_is_stationary() {
    let k = pendulum_kernel(128);
    let cv = critical_value(&k).unwrap();
    let b = peierls_barrier(&k, &cv).unwrap();
    let a = aubry_set(&k, &b, DEFAULT_ETA).unwrap();
    assert_eq!(a.indices, vec![0]);
    assert_eq!(a.labels, vec![AubryLabel::Stationary]);
}

#[test]
fn rotation_field_aubry_set_is_the_whole_circle() {
    let n = 64;
    let s = 1.0 / n as f64;
    let field = VectorField::constant(&[1.0]).unwrap();
    let k = ActionKernel::build(&mane_lagrangian(&field), GridTorus::new(1, n).unwrap(), s, 4.0 * s)
        .unwrap();
    let cv = critical_value(&k).unwrap();
    assert_eq!(cv.c, 0.0);
    let b = peierls_barrier(&k, &cv).unwrap();
    let a = aubry_set(&k, &b, DEFAULT_ETA).unwrap();
    assert_eq!(a.len(), n);
    assert!(a.labels.iter().all(|l| *l == AubryLabel::Periodic));
    let g = chain_graph(&field, *k.grid(), 0.25, 1.5 * s, 16).unwrap();
    let chain = chain_recurrent_set(&g);
    assert_eq!(compare_aubry_chain(&a, &chain, k.grid()).unwrap().hausdorff_distance, 0.0);
}
