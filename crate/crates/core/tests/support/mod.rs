//! Straight-line reference implementations on plain `Vec` matrices.
//!
//! Nothing here calls into the library: inverses use Gauss-Jordan elimination
//! and every product is an explicit loop, so agreement with the nalgebra code
//! is a meaningful check.
#![allow(dead_code, clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;
pub type Vector = Vec<f64>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for i in 0..n {
        m[i][i] = 1.0;
    }
    m
}

pub fn t(a: &Mat) -> Mat {
    let mut out = zeros(a[0].len(), a.len());
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub fn mm(a: &Mat, b: &Mat) -> Mat {
    let mut out = zeros(a.len(), b[0].len());
    for i in 0..a.len() {
        for j in 0..b[0].len() {
            let mut s = 0.0;
            for k in 0..b.len() {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn mv(a: &Mat, x: &Vector) -> Vector {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(p, q)| p - q).collect())
        .collect()
}

pub fn scale(a: &Mat, c: f64) -> Mat {
    a.iter()
        .map(|r| r.iter().map(|v| v * c).collect())
        .collect()
}

pub fn vadd(a: &Vector, b: &Vector) -> Vector {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

pub fn vsub(a: &Vector, b: &Vector) -> Vector {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

pub fn outer(a: &Vector, b: &Vector) -> Mat {
    a.iter()
        .map(|p| b.iter().map(|q| p * q).collect())
        .collect()
}

pub fn trace(a: &Mat) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inv(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.to_vec();
    let mut out = eye(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        assert!(m[pivot][col].abs() > 1e-300, "singular matrix in oracle");
        m.swap(col, pivot);
        out.swap(col, pivot);
        let d = m[col][col];
        for j in 0..n {
            m[col][j] /= d;
            out[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        m[i][j] -= f * m[col][j];
                        out[i][j] -= f * out[col][j];
                    }
                }
            }
        }
    }
    out
}

/// Determinant by Gaussian elimination.
pub fn det(a: &Mat) -> f64 {
    let n = a.len();
    let mut m: Mat = a.to_vec();
    let mut d = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(col, pivot);
            d = -d;
        }
        d *= m[col][col];
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            for j in col..n {
                m[i][j] -= f * m[col][j];
            }
        }
    }
    d
}

#[derive(Clone, Debug)]
pub struct Model {
    pub f: Mat,
    pub h: Mat,
    pub q: Mat,
    pub u: Option<Vector>,
}

pub fn predict(model: &Model, x: &Vector, p: &Mat) -> (Vector, Mat) {
    let mut xp = mv(&model.f, x);
    if let Some(u) = &model.u {
        xp = vadd(&xp, u);
    }
    let pp = add(&mm(&mm(&model.f, p), &t(&model.f)), &model.q);
    (xp, pp)
}

/// Covariance-form update: K = P Hᵀ (H P Hᵀ + R)⁻¹.
pub fn kf_update(h: &Mat, xp: &Vector, pp: &Mat, z: &Vector, r: &Mat) -> (Vector, Mat) {
    let pht = mm(pp, &t(h));
    let s = add(&mm(h, &pht), r);
    let k = mm(&pht, &inv(&s));
    let x = vadd(xp, &mv(&k, &vsub(z, &mv(h, xp))));
    let p = sub(pp, &mm(&mm(&k, h), pp));
    (x, p)
}

/// Information-form weights a_p = (P⁻¹ + HᵀR⁻¹H)⁻¹P⁻¹, a_r = (P⁻¹ + HᵀR⁻¹H)⁻¹HᵀR⁻¹.
pub fn info_weights(h: &Mat, pp: &Mat, r: &Mat) -> (Mat, Mat) {
    let pinv = inv(pp);
    let rinv = inv(r);
    let info = inv(&add(&pinv, &mm(&mm(&t(h), &rinv), h)));
    (mm(&info, &pinv), mm(&mm(&info, &t(h)), &rinv))
}

pub struct TkfParams {
    pub omega: f64,
    pub nu: f64,
    pub tau: f64,
    pub n_iters: usize,
}

/// One step of the variational Student's-t filter, transcribed line by line.
pub fn tkf_reference_step(
    model: &Model,
    x_prev: &Vector,
    p_prev: &Mat,
    z: &Vector,
    r: &Mat,
    prm: &TkfParams,
) -> (Vector, Mat) {
    let n = x_prev.len() as f64;
    let m = z.len() as f64;
    let (xp, pp) = predict(model, x_prev, p_prev);
    let h = &model.h;
    let u = n + prm.tau + 1.0;
    let big_u = scale(&pp, prm.tau);
    let mut e_sig_inv = scale(&inv(&big_u), u - n - 1.0);
    let rinv = inv(r);
    let mut x = xp.clone();
    let mut p = pp.clone();
    for _ in 0..prm.n_iters {
        let dx = vsub(&x, &xp);
        let d = add(&p, &outer(&dx, &dx));
        let e_xi = (n + prm.omega) / (prm.omega + trace(&mm(&d, &e_sig_inv)));
        let res = vsub(z, &mv(h, &x));
        let e = add(&outer(&res, &res), &mm(&mm(h, &p), &t(h)));
        let e_lambda = (m + prm.nu) / (prm.nu + trace(&mm(&e, &rinv)));
        let u_hat = u + 1.0;
        let u_hat_mat = add(&big_u, &scale(&d, e_xi));
        e_sig_inv = scale(&inv(&u_hat_mat), u_hat - n - 1.0);
        let r_tilde = scale(r, 1.0 / e_lambda);
        let p_tilde = scale(&inv(&e_sig_inv), 1.0 / e_xi);
        let pht = mm(&p_tilde, &t(h));
        let k = mm(&pht, &inv(&add(&mm(h, &pht), &r_tilde)));
        x = vadd(&xp, &mv(&k, &vsub(z, &mv(h, &xp))));
        p = sub(&p_tilde, &mm(&mm(&k, h), &p_tilde));
    }
    (x, p)
}

/// TG = 4·sqrt(det(R_B R_S⁻¹)) / (3 + exp(10·P)).
pub fn tg(r_s: &Mat, r_b: &Mat, p: f64) -> f64 {
    4.0 * det(&mm(r_b, &inv(r_s))).sqrt() / (3.0 + (10.0 * p).exp())
}

/// Four-state constant-velocity model observing both positions.
pub fn cv_model(dt: f64) -> Model {
    let f = vec![
        vec![1.0, 0.0, dt, 0.0],
        vec![0.0, 1.0, 0.0, dt],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ];
    let h = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt.powi(2));
    let q = vec![
        vec![a, 0.0, b, 0.0],
        vec![0.0, a, 0.0, b],
        vec![b, 0.0, c, 0.0],
        vec![0.0, b, 0.0, c],
    ];
    Model { f, h, q, u: None }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

pub fn flatten(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}
