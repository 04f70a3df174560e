//! Factor match score between a model and a permuted, rescaled and
//! perturbed copy of itself.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tparafac2::eval::{detect_degenerate, fms, DEFAULT_DEGENERACY_THRESHOLD};
use tparafac2::model::Parafac2Factors;

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn main() -> tparafac2::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (i, j, k, r) = (20, 15, 6, 3);
    let truth = Parafac2Factors::new(
        gauss(&mut rng, i, r),
        (0..k).map(|_| gauss(&mut rng, j, r)).collect(),
        (0..k).map(|_| DVector::from_fn(r, |_, _| rng.gen_range(0.5..1.5))).collect(),
    )?;

    // reorder components [2, 0, 1], flip the sign of one and rescale another
    let order = [2, 0, 1];
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), r, |row, c| m[(row, order[c])]);
    let mut a = pick(&truth.a);
    a.column_mut(0).scale_mut(-3.0);
    let b: Vec<_> = truth.b.iter().map(|m| {
        let mut p = pick(m);
        p.column_mut(0).scale_mut(-1.0);
        p
    }).collect();
    let d: Vec<_> = truth.d.iter().map(|v| DVector::from_fn(r, |c, _| v[order[c]] / 3.0)).collect();
    let shuffled = Parafac2Factors::new(a, b, d)?;
    let rep = fms(&shuffled, &truth)?;
    println!("permuted copy: FMS {:.6}, permutation {:?}", rep.fms, rep.permutation);

    for noise in [0.05, 0.2, 0.5] {
        let noisy = Parafac2Factors::new(
            &truth.a + gauss(&mut rng, i, r) * noise,
            truth.b.iter().map(|m| m + gauss(&mut rng, j, r) * noise).collect(),
            truth.d.clone(),
        )?;
        let rep = fms(&noisy, &truth)?;
        println!("perturbed by {noise}: FMS {:.4}, per component {:.3?}", rep.fms, rep.per_component_scores);
    }

    // two nearly opposite components look like a diverging fit
    let mut a = truth.a.clone();
    let col = a.column(0) * -1.0 + gauss(&mut rng, i, 1) * 0.01;
    a.set_column(1, &col);
    let b: Vec<_> = truth.b.iter().map(|m| {
        let mut m = m.clone();
        let c = m.column(0).into_owned();
        m.set_column(1, &c);
        m
    }).collect();
    let degenerate = Parafac2Factors::new(a, b, truth.d.clone())?;
    println!("degenerate: {}", detect_degenerate(&degenerate, DEFAULT_DEGENERACY_THRESHOLD));
    Ok(())
}
