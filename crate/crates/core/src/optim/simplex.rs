use ndarray::{Array1, Array2, ArrayViewMut1};

/// Euclidean projection onto the probability simplex (sort-based, O(K log K)).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_slice(&mut out);
    out
}

fn project_slice(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

pub(crate) fn project_view(mut v: ArrayViewMut1<'_, f64>) {
    match v.as_slice_mut() {
        Some(s) => project_slice(s),
        None => {
            let mut tmp = v.to_vec();
            project_slice(&mut tmp);
            v.assign(&Array1::from(tmp));
        }
    }
}

/// Projects every column onto the simplex.
pub(crate) fn project_columns(a: &mut Array2<f64>) {
    for col in a.columns_mut() {
        project_view(col);
    }
}

/// Projection of the whole matrix (as one K²-vector) onto the unit simplex:
/// nonnegative entries summing to one.
pub fn project_scaled_simplex(x: &Array2<f64>) -> Array2<f64> {
    let (r, c) = x.dim();
    let flat: Vec<f64> = x.iter().copied().collect();
    Array2::from_shape_vec((r, c), project_simplex(&flat)).expect("shape preserved")
}
