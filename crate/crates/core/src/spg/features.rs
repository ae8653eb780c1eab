use crate::graphcore::{knn_lists, GraphError, PointCloud, GEOMETRIC_FEATURES};
use crate::scalar::Scalar;

/// Neighborhood size used for geometric features.
pub const FEATURE_KNN: usize = 10;

/// Per-point linearity, planarity, scattering, verticality and elevation.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricFeatures<T> {
    pub rows: Vec<[T; GEOMETRIC_FEATURES]>,
}

impl<T: Scalar> GeometricFeatures<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn linearity(&self, i: usize) -> T {
        self.rows[i][0]
    }

    pub fn planarity(&self, i: usize) -> T {
        self.rows[i][1]
    }

    pub fn scattering(&self, i: usize) -> T {
        self.rows[i][2]
    }

    pub fn verticality(&self, i: usize) -> T {
        self.rows[i][3]
    }

    pub fn elevation(&self, i: usize) -> T {
        self.rows[i][4]
    }
}

/// Mean and covariance of a set of points.
pub fn covariance<T: Scalar>(points: impl Iterator<Item = [T; 3]> + Clone) -> ([T; 3], [[T; 3]; 3]) {
    let mut n = 0usize;
    let mut mean = [T::zero(); 3];
    for p in points.clone() {
        n += 1;
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    if n == 0 {
        return (mean, [[T::zero(); 3]; 3]);
    }
    let nf = T::of_usize(n);
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut c = [[T::zero(); 3]; 3];
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for a in 0..3 {
            for b in 0..3 {
                c[a][b] += d[a] * d[b];
            }
        }
    }
    for row in &mut c {
        row.iter_mut().for_each(|v| *v /= nf);
    }
    (mean, c)
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues sorted in decreasing order and the matching unit
/// eigenvectors (`vecs[k]` belongs to `vals[k]`).
pub fn sym_eigen3<T: Scalar>(m: &[[T; 3]; 3]) -> ([T; 3], [[T; 3]; 3]) {
    let mut a = *m;
    let mut v = [[T::zero(); 3]; 3];
    for (k, row) in v.iter_mut().enumerate() {
        row[k] = T::one();
    }
    let two = T::of(2.0);
    for _ in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if off == T::zero() || off <= T::epsilon() * T::epsilon() * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == T::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            // columns of v accumulate the rotations
            for row in &mut v {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| a[y][y].partial_cmp(&a[x][x]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.map(|k| a[k][k].max(T::zero()));
    let vecs = order.map(|k| [v[0][k], v[1][k], v[2][k]]);
    (vals, vecs)
}

/// Dimensionality and verticality of a neighborhood from its covariance.
/// A degenerate neighborhood (λ1 = 0) counts as fully scattered.
pub fn shape_features<T: Scalar>(cov: &[[T; 3]; 3]) -> [T; 4] {
    let (l, v) = sym_eigen3(cov);
    if !(l[0] > T::zero()) {
        return [T::zero(), T::zero(), T::one(), T::zero()];
    }
    let lin = (l[0] - l[1]) / l[0];
    let pla = (l[1] - l[2]) / l[0];
    let sca = l[2] / l[0];
    let mut u = [T::zero(); 3];
    for k in 0..3 {
        for a in 0..3 {
            u[a] += l[k] * v[k][a].abs();
        }
    }
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let vert = if norm > T::zero() { u[2] / norm } else { T::zero() };
    [lin, pla, sca, vert]
}

/// Geometric features of every point over its `k`-nearest-neighbor
/// neighborhood (the point itself included).
pub fn geometric_features<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<GeometricFeatures<T>, GraphError> {
    let lists = knn_lists(cloud, k)?;
    let p = &cloud.positions;
    let (lo, hi) = cloud.bounds().expect("non-empty cloud");
    let range = hi[2] - lo[2];
    let rows = lists
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let pts = std::iter::once(p[i]).chain(nb.iter().map(|&j| p[j]));
            let (_, cov) = covariance(pts);
            let [lin, pla, sca, vert] = shape_features(&cov);
            let elev = if range > T::zero() { (p[i][2] - lo[2]) / range } else { T::zero() };
            [lin, pla, sca, vert, elev]
        })
        .collect();
    Ok(GeometricFeatures { rows })
}
