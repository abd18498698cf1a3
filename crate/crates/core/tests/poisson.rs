use std::f64::consts::PI;
use std::sync::Arc;

use memristor_core::grid::{build_mesh, BoundaryTag, DomainSpec, Mesh};
use memristor_core::poisson::{
    assemble_operator, green_apply, solve_poisson, superpose_potential, PotentialDecomposition, TERMINALS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(n: usize) -> Arc<Mesh> {
    Arc::new(build_mesh(&DomainSpec::unit_square(), n, n).unwrap())
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// `u = sin(pi x) cos(pi y) + x` is 0 on the left, 1 on the right and has zero
/// normal derivative on top and bottom.
fn manufactured_error(n: usize, lambda2: f64) -> f64 {
    let mesh = unit(n);
    let op = assemble_operator(mesh.clone(), lambda2, &TERMINALS).unwrap();
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).cos() + x;
    let g: Vec<f64> = mesh
        .cell_centers()
        .map(|(x, y)| -2.0 * PI * PI * lambda2 * (PI * x).sin() * (PI * y).cos())
        .collect();
    let bc: Vec<f64> = mesh.faces.iter().map(|f| exact(f.midpoint.0, f.midpoint.1)).collect();
    let u = op.solve(&g, &bc).unwrap();
    let want: Vec<f64> = mesh.cell_centers().map(|(x, y)| exact(x, y)).collect();
    max_err(&u, &want)
}

#[test]
fn manufactured_solution_is_second_order() {
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| manufactured_error(n, 0.7)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.9, "observed order {order}, errors {e:?}");
    }
}

#[test]
fn superposition_matches_direct_solve() {
    let mesh = unit(24);
    let nc = mesh.n_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let op = assemble_operator(mesh.clone(), 0.2, &TERMINALS).unwrap();
    let field = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> { (0..nc).map(|_| rng.random_range(lo..hi)).collect() };
    let (n, p, d, a) = (field(&mut rng, 0.0, 2.0), field(&mut rng, 0.0, 2.0), field(&mut rng, 0.0, 2.0), field(&mut rng, -1.0, 1.0));
    let vbi: Vec<f64> = mesh.faces.iter().map(|f| if f.tag.is_some() { rng.random_range(-0.5..0.5) } else { 0.0 }).collect();
    let u_d = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];

    let decomp = PotentialDecomposition::new(&op, &a, &vbi).unwrap();
    let charge: Vec<f64> = (0..nc).map(|c| n[c] - p[c] - d[c]).collect();
    let (corr, _) = green_apply(&op, &charge).unwrap();
    let v_sup = superpose_potential(&decomp, u_d, &corr).unwrap();

    let vbar: Vec<f64> = mesh
        .faces
        .iter()
        .zip(&vbi)
        .map(|(f, v)| match f.tag.and_then(BoundaryTag::terminal) {
            Some(j) => v + u_d[j],
            None => 0.0,
        })
        .collect();
    let v_dir = solve_poisson(&op, &n, &p, &d, &a, &vbar).unwrap();
    let scale = 1.0 + v_dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_err(&v_dir, &v_sup) <= 1e-10 * scale);
}

#[test]
fn harmonic_weights_partition_unity() {
    let mesh = unit(20);
    let op = assemble_operator(mesh, 1.3, &TERMINALS).unwrap();
    let (w1, w2) = (op.harmonic_weight(0).unwrap(), op.harmonic_weight(1).unwrap());
    for c in 0..w1.len() {
        assert!((w1[c] + w2[c] - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn green_operator_is_self_adjoint() {
    let mesh = unit(12);
    let op = assemble_operator(mesh.clone(), 0.4, &TERMINALS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g1: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g2: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (l1, _) = green_apply(&op, &g1).unwrap();
    let (l2, _) = green_apply(&op, &g2).unwrap();
    let a: f64 = l1.iter().zip(&g2).map(|(x, y)| x * y).sum();
    let b: f64 = g1.iter().zip(&l2).map(|(x, y)| x * y).sum();
    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
}

#[test]
fn green_energy_bound_for_divergence_data() {
    let mesh = unit(16);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for lambda2 in [0.05, 0.5, 2.0] {
        let op = assemble_operator(mesh.clone(), lambda2, &TERMINALS).unwrap();
        // insulating faces carry no current
        let j: Vec<f64> = mesh
            .faces
            .iter()
            .map(|f| if f.tag == Some(BoundaryTag::N) { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let div = mesh.divergence(&j).unwrap();
        let (_, grad) = green_apply(&op, &div).unwrap();
        let lhs = lambda2 * mesh.face_inner(&grad, &grad);
        let rhs = mesh.face_inner(&j, &j) / lambda2;
        assert!(lhs <= rhs * (1.0 + 1e-12), "lambda2 = {lambda2}: {lhs} > {rhs}");
        // the bound comes from the identity lambda^2 |grad f|^2 = (J, grad f)
        let cross = mesh.face_inner(&j, &grad);
        assert!((lambda2 * mesh.face_inner(&grad, &grad) - cross).abs() <= 1e-10 * cross.abs().max(1.0));
    }
}

#[test]
fn maximum_principle() {
    let mesh = unit(10);
    let op = assemble_operator(mesh.clone(), 1.0, &TERMINALS).unwrap();
    // lambda^2 Laplace(u) = g <= 0 with zero boundary data forces u >= 0
    let g = vec![-1.0; mesh.n_cells()];
    let u = op.solve(&g, &vec![0.0; mesh.n_faces()]).unwrap();
    assert!(u.iter().all(|v| *v > 0.0));
}

#[test]
fn partial_terminals_still_solve() {
    use memristor_core::grid::{BoundaryLayout, Edge, Segment};
    let mut layout = BoundaryLayout::uniform(BoundaryTag::N, BoundaryTag::N, BoundaryTag::N, BoundaryTag::N);
    layout.set_edge(
        Edge::Left,
        vec![Segment::new(0.0, 0.25, BoundaryTag::N), Segment::new(0.25, 0.75, BoundaryTag::D1), Segment::new(0.75, 1.0, BoundaryTag::N)],
    );
    layout.set_edge(Edge::Right, vec![Segment::whole(BoundaryTag::D2)]);
    let mesh = Arc::new(build_mesh(&DomainSpec::unit_square().with_layout(layout), 8, 8).unwrap());
    let op = assemble_operator(mesh, 1.0, &TERMINALS).unwrap();
    let (w1, w2) = (op.harmonic_weight(0).unwrap(), op.harmonic_weight(1).unwrap());
    for c in 0..w1.len() {
        assert!((w1[c] + w2[c] - 1.0).abs() <= 1e-12);
        assert!(w1[c] > 0.0 && w1[c] < 1.0);
    }
}
