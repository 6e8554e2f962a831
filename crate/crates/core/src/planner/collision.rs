use super::{Margin, OccupancyWorld};
use crate::lattice::Vec3;

/// Lower bound on the distance from point `y` to the axis-aligned ellipsoid
/// centered at the origin with semi-axes `axes` (zero axes allowed). Zero
/// when `y` is inside.
///
/// The bound comes from the Lagrangian dual of the projection problem, so
/// it is valid for any multiplier and tight at the bisected root.
pub fn ellipsoid_distance_lower_bound(y: Vec3, axes: Vec3) -> f64 {
    let degenerate_outside = (0..3).any(|d| axes[d] <= 0.0 && y[d] != 0.0);
    let level: f64 = (0..3).filter(|&d| axes[d] > 0.0).map(|d| (y[d] / axes[d]).powi(2)).sum();
    if !degenerate_outside && level <= 1.0 {
        return 0.0;
    }
    // g(mu) = sum (a y / (a^2 + mu))^2 is decreasing; its root is the multiplier.
    let g = |mu: f64| -> f64 {
        (0..3)
            .filter(|&d| axes[d] > 0.0)
            .map(|d| (axes[d] * y[d] / (axes[d] * axes[d] + mu)).powi(2))
            .sum()
    };
    let dual = |mu: f64| -> f64 {
        let s: f64 = (0..3)
            .map(|d| {
                let a2 = axes[d] * axes[d];
                if a2 > 0.0 {
                    mu * y[d] * y[d] / (a2 + mu)
                } else {
                    // A zero axis pins that coordinate of the projection to 0.
                    y[d] * y[d]
                }
            })
            .sum();
        s - mu
    };
    let norm_ay = (0..3).map(|d| (axes[d] * y[d]).powi(2)).sum::<f64>().sqrt();
    let (mut lo, mut hi) = (0.0, norm_ay.max(f64::MIN_POSITIVE));
    if g(0.0) <= 1.0 {
        // Only degenerate axes put the point outside; the root is at mu = 0.
        hi = 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = dual(lo).max(dual(hi)).max(0.0);
    best.sqrt()
}

/// Conservative overlap test of an ellipsoid and a sphere. Returns true when
/// they may intersect, including when they touch.
pub fn ellipsoid_touches_sphere(center: Vec3, axes: Vec3, sphere_center: Vec3, radius: f64) -> bool {
    let y = [0, 1, 2].map(|d| sphere_center[d] - center[d]);
    ellipsoid_distance_lower_bound(y, axes) <= radius * (1.0 + 1e-12) + 1e-9
}

/// Whether the robot at `position` and time `t`, occupying the margin
/// ellipsoid grown by `extra_margin` per axis and swept by `robot_radius`,
/// stays clear of every obstacle. `clearance` additionally inflates the
/// obstacles.
pub fn collision_free(
    t: f64,
    position: Vec3,
    world: &OccupancyWorld,
    margin: &Margin,
    robot_radius: f64,
    extra_margin: Vec3,
    clearance: f64,
) -> bool {
    let center = [0, 1, 2].map(|d| position[d] + margin.offset[d]);
    let axes = [0, 1, 2].map(|d| margin.semi_axes[d] + extra_margin[d]);
    world
        .obstacles
        .iter()
        .all(|o| !ellipsoid_touches_sphere(center, axes, o.center_at(t), o.radius + robot_radius + clearance))
}
