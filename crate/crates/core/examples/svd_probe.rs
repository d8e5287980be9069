use faer::linalg::solvers::Svd;
use faer::Mat;
use num_complex::Complex64;
use std::time::Instant;

fn main() {
    // the exact near-rank-one case nalgebra mishandles
    let b: Vec<Complex64> = (0..4).map(|i| Complex64::new(0.3 + i as f64, 0.7 - i as f64)).collect();
    let a: Vec<Complex64> = (0..4).map(|i| Complex64::new(-0.2 + (i as f64) * 0.5, 0.4 + i as f64)).collect();
    let w = Mat::<Complex64>::from_fn(4, 4, |i, j| {
        b[i] * a[j] + Complex64::new(1e-13 * ((i * j) as f64), -1e-13 * (i as f64))
    });
    let svd = Svd::new(w.as_ref()).unwrap();
    let s = svd.S();
    println!("singular values: {:?}", (0..4).map(|i| s[i].re).collect::<Vec<_>>());
    // reconstruction: U S V^H
    let mut us = svd.U().to_owned();
    for j in 0..4 {
        for i in 0..4 {
            us[(i, j)] *= s[j];
        }
    }
    let rec = &us * svd.V().adjoint();
    let mut err: f64 = 0.0;
    let mut nrm: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            err += (rec[(i, j)] - w[(i, j)]).norm_sqr();
            nrm += w[(i, j)].norm_sqr();
        }
    }
    println!("full recon rel err: {:.3e}", (err / nrm).sqrt());

    // timing on paper-scale and large operators
    for n in [256usize, 1024] {
        let m = Mat::<Complex64>::from_fn(n, n, |i, j| {
            Complex64::new(((i * 7 + j * 13) % 17) as f64 - 8.0, ((i * 5 + j * 3) % 11) as f64 - 5.0)
        });
        let t0 = Instant::now();
        let svd = Svd::new_thin(m.as_ref()).unwrap();
        println!("svd {n}x{n}: {:?} (smax {:.3e})", t0.elapsed(), svd.S()[0].re);
    }
}
