#![allow(dead_code)]

use agegen_core::volume::VectorField;

/// Largest pointwise distance over voxels at least `margin` from every face.
pub fn interior_max_distance(a: &VectorField, b: &VectorField, margin: usize) -> f64 {
    let [nx, ny, nz] = a.dims().as_array();
    let mut worst = 0.0f64;
    for z in margin..nz - margin {
        for y in margin..ny - margin {
            for x in margin..nx - margin {
                let (p, q) = (a.get(x, y, z), b.get(x, y, z));
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// Voxels whose trajectories can reach a face within time `t` see the
/// clamped extension rather than the flow itself.
pub fn flow_margin(v: &VectorField, t: f64) -> usize {
    (t * v.max_norm()).ceil() as usize + 1
}
