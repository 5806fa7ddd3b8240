//! Single-pair correspondence: bound, selection rule, and the iteration.

use super::{IcfpError, IcfpParams};
use crate::geometry::{build_nn_index, NnIndex, Point3, PointCloud};

/// Correspondences from source indices to target indices with distances in
/// millimeters. Each source index appears at most once.
#[derive(Debug, Clone)]
pub struct CorrespondenceMap {
    pub pairs: Vec<(usize, usize, f64)>,
    pub source_size: usize,
    pub target_size: usize,
}

impl CorrespondenceMap {
    pub fn mean_distance(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.2).sum::<f64>() / self.pairs.len() as f64
    }

    /// Target index for a source index, if present.
    pub fn target_of(&self, source: usize) -> Option<(usize, f64)> {
        self.pairs
            .binary_search_by_key(&source, |p| p.0)
            .ok()
            .map(|i| (self.pairs[i].1, self.pairs[i].2))
    }
}

/// Boundary distance `l = m + ζσ` with σ the population standard deviation.
pub fn correspondence_bound(distances: &[f64], zeta: f64) -> Result<f64, IcfpError> {
    if distances.is_empty() {
        return Err(IcfpError::EmptyDistances);
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(mean + zeta * var.sqrt())
}

/// Closest-farthest rule: the farthest candidate when every candidate lies
/// beyond the bound, otherwise the closest. Ties break toward the smaller
/// target index.
pub fn select_correspondence(
    candidates: &[(usize, f64)],
    bound: f64,
) -> Result<(usize, f64), IcfpError> {
    if candidates.is_empty() {
        return Err(IcfpError::EmptyCandidates);
    }
    let all_beyond = candidates.iter().all(|&(_, d)| d > bound);
    let pick = if all_beyond {
        candidates.iter().fold(candidates[0], |best, &c| {
            if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) {
                c
            } else {
                best
            }
        })
    } else {
        candidates.iter().fold(candidates[0], |best, &c| {
            if c.1 < best.1 || (c.1 == best.1 && c.0 < best.0) {
                c
            } else {
                best
            }
        })
    };
    Ok(pick)
}

/// Result of running the correspondence iteration to convergence.
#[derive(Debug, Clone)]
pub struct IcfpResult {
    pub map: CorrespondenceMap,
    /// Mean selected-correspondence distance at the final iteration.
    pub residual: f64,
    pub iterations: usize,
    /// Final per-source-point displacement field.
    pub displacement: Vec<Point3>,
}

/// Median distance to the nearest other point of the cloud.
fn median_nn_spacing(points: &[Point3], index: &NnIndex) -> f64 {
    let mut spacings: Vec<f64> = points
        .iter()
        .map(|p| {
            let two = index.k_nearest(*p, 2);
            if two.len() > 1 {
                two[1].1
            } else {
                0.0
            }
        })
        .collect();
    spacings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    spacings[spacings.len() / 2]
}

/// One-shot correspondence selection from `source` points into an indexed
/// target, per the closest-farthest scheme: each target point claims its
/// nearest source point, the bound `l = m + ζσ` is computed over the claim
/// distances, sources with several claimants resolve them through
/// [`select_correspondence`], and unclaimed sources fall back to their
/// nearest target point so the map is total over the source. Returns the map
/// and the mean match distance.
pub fn icfp_match(
    source: &[Point3],
    target_index: &NnIndex,
    zeta: f64,
) -> Result<(CorrespondenceMap, f64), IcfpError> {
    let n = source.len();
    let source_index = build_nn_index(&PointCloud::new(source.to_vec()))?;

    let mut candidate_sets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut claim_distances = Vec::with_capacity(target_index.len());
    for j in 0..target_index.len() {
        let (i, d) = source_index.nearest(target_index.point(j));
        candidate_sets[i].push((j, d));
        claim_distances.push(d);
    }
    let bound = correspondence_bound(&claim_distances, zeta)?;

    let mut pairs = Vec::with_capacity(n);
    for (i, cands) in candidate_sets.iter().enumerate() {
        let (j, d) = if cands.is_empty() {
            target_index.nearest(source[i])
        } else {
            select_correspondence(cands, bound)?
        };
        pairs.push((i, j, d));
    }
    let residual = pairs.iter().map(|p| p.2).sum::<f64>() / n as f64;
    let map = CorrespondenceMap { pairs, source_size: n, target_size: target_index.len() };
    Ok((map, residual))
}

fn step_inner(
    source: &[Point3],
    target_index: &NnIndex,
    params: &IcfpParams,
    displacement: &[Point3],
    kernel_sigma: f64,
) -> Result<(CorrespondenceMap, Vec<Point3>, f64), IcfpError> {
    let n = source.len();
    let deformed: Vec<Point3> = source
        .iter()
        .zip(displacement)
        .map(|(p, d)| p.add(*d))
        .collect();
    let (map, residual) = icfp_match(&deformed, target_index, params.zeta)?;
    let pairs = map.pairs;

    // Gaussian-smoothed step toward the matches. The smoothing pools the
    // match displacements of nearby source points so the field stays locally
    // rigid-ish instead of chasing individual matches.
    let raw: Vec<Point3> = pairs
        .iter()
        .map(|&(i, j, _)| target_index.point(j).sub(deformed[i]))
        .collect();
    let deformed_index = build_nn_index(&PointCloud::new(deformed.clone()))?;
    let cutoff = 3.0 * kernel_sigma;
    let inv_two_sigma2 = if kernel_sigma > 0.0 { 1.0 / (2.0 * kernel_sigma * kernel_sigma) } else { 0.0 };
    let mut new_disp = Vec::with_capacity(n);
    for (i, p) in deformed.iter().enumerate() {
        let mut acc = Point3::default();
        let mut weight = 0.0;
        if kernel_sigma > 0.0 {
            for (m, r) in deformed_index.within_radius(*p, cutoff) {
                let w = (-r * r * inv_two_sigma2).exp();
                acc = acc.add(raw[m].scale(w));
                weight += w;
            }
        }
        let step = if weight > 0.0 { acc.scale(1.0 / weight) } else { raw[i] };
        new_disp.push(displacement[i].add(step));
    }

    let map = CorrespondenceMap { pairs, source_size: n, target_size: target_index.len() };
    Ok((map, new_disp, residual))
}

fn check_target(target: &PointCloud) -> Result<(), IcfpError> {
    if target.is_empty() {
        return Err(IcfpError::Geometry(crate::geometry::GeometryError::EmptyCloud));
    }
    let first = target.points()[0];
    if target.points().iter().all(|p| *p == first) && target.len() > 1 {
        return Err(IcfpError::DegenerateTarget);
    }
    Ok(())
}

/// One correspondence-and-deform iteration.
///
/// Candidate closest points are found from the deformed source into the
/// target, the bound `l` is computed over the nearest distances, each
/// candidate set is resolved with [`select_correspondence`], and the
/// displacement field takes a locally smoothed step toward the matches.
/// Returns the correspondence map, the updated field, and the mean residual.
pub fn icfp_step(
    source: &PointCloud,
    target: &PointCloud,
    params: &IcfpParams,
    displacement: &[Point3],
) -> Result<(CorrespondenceMap, Vec<Point3>, f64), IcfpError> {
    if source.is_empty() {
        return Err(IcfpError::Geometry(crate::geometry::GeometryError::EmptyCloud));
    }
    check_target(target)?;
    assert_eq!(displacement.len(), source.len(), "displacement field size mismatch");
    let target_index = build_nn_index(target)?;
    let source_index = build_nn_index(source)?;
    let sigma = median_nn_spacing(source.points(), &source_index);
    step_inner(source.points(), &target_index, params, displacement, sigma)
}

/// Iterations spent shrinking the smoothing kernel from its coarse start to
/// the median-spacing scale.
const ANNEAL_ITERATIONS: usize = 12;
const ANNEAL_START_FACTOR: f64 = 6.0;

/// Runs the correspondence iteration until the mean residual changes by less
/// than `convergence_tol` or `max_iterations` is reached. Always terminates.
///
/// The smoothing kernel anneals from a coarse scale down to the cloud's
/// median spacing over the first iterations, which lets a coherent large
/// motion (for example a rigid rotation) be captured before local detail is
/// resolved.
pub fn icfp_register(
    source: &PointCloud,
    target: &PointCloud,
    params: &IcfpParams,
) -> Result<IcfpResult, IcfpError> {
    if source.is_empty() {
        return Err(IcfpError::Geometry(crate::geometry::GeometryError::EmptyCloud));
    }
    check_target(target)?;
    let target_index = build_nn_index(target)?;
    let source_index = build_nn_index(source)?;
    let spacing = median_nn_spacing(source.points(), &source_index);

    let max_iterations = params.max_iterations.max(1);
    let anneal = ANNEAL_ITERATIONS.min(max_iterations);
    let mut displacement = vec![Point3::default(); source.len()];
    let mut prev_residual = f64::INFINITY;
    let mut last: Option<(CorrespondenceMap, f64)> = None;
    let mut iterations = 0;
    for it in 0..max_iterations {
        let frac = if anneal > 1 { (it as f64 / (anneal - 1) as f64).min(1.0) } else { 1.0 };
        let sigma = spacing * ANNEAL_START_FACTOR.powf(1.0 - frac);
        let (map, new_disp, residual) =
            step_inner(source.points(), &target_index, params, &displacement, sigma)?;
        iterations += 1;
        displacement = new_disp;
        let settled = residual < params.convergence_tol
            || (it + 1 >= anneal && (prev_residual - residual).abs() < params.convergence_tol);
        prev_residual = residual;
        last = Some((map, residual));
        if settled {
            break;
        }
    }
    let (map, residual) = last.expect("at least one iteration runs");
    Ok(IcfpResult { map, residual, iterations, displacement })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_with_zero_variance_is_the_mean() {
        let l = correspondence_bound(&[2.0, 2.0, 2.0], 1.7).unwrap();
        assert_eq!(l, 2.0);
    }

    #[test]
    fn bound_matches_hand_computation() {
        // m = 2, population σ = 1 → l = 2 + 1.7.
        let l = correspondence_bound(&[1.0, 3.0], 1.7).unwrap();
        assert!((l - 3.7).abs() < 1e-12);
    }

    #[test]
    fn bound_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let distances: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..8.0)).collect();
        let zeta = 1.7;
        let got = correspondence_bound(&distances, zeta).unwrap();
        // Two-pass oracle with independent accumulation.
        let n = distances.len() as f64;
        let mut mean = 0.0;
        for d in distances.iter().rev() {
            mean += d / n;
        }
        let mut var = 0.0;
        for d in distances.iter().rev() {
            var += (d - mean) * (d - mean) / n;
        }
        let expect = mean + zeta * var.sqrt();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn bound_is_monotone_in_zeta() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let n = rng.random_range(1..20);
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
            let z1 = rng.random_range(0.0..3.0);
            let z2 = z1 + rng.random_range(0.0..2.0);
            assert!(
                correspondence_bound(&d, z1).unwrap() <= correspondence_bound(&d, z2).unwrap()
            );
        }
    }

    #[test]
    fn select_prefers_closest_within_bound() {
        let picked = select_correspondence(&[(7, 1.0), (2, 4.0)], 2.0).unwrap();
        assert_eq!(picked, (7, 1.0));
    }

    #[test]
    fn select_prefers_farthest_when_all_beyond_bound() {
        let picked = select_correspondence(&[(7, 3.0), (2, 4.0)], 2.0).unwrap();
        assert_eq!(picked, (2, 4.0));
    }

    #[test]
    fn select_single_candidate_ignores_bound() {
        assert_eq!(select_correspondence(&[(5, 9.0)], 100.0).unwrap(), (5, 9.0));
        assert_eq!(select_correspondence(&[(5, 9.0)], 0.1).unwrap(), (5, 9.0));
    }

    #[test]
    fn select_breaks_ties_toward_smaller_index() {
        assert_eq!(select_correspondence(&[(9, 1.0), (3, 1.0)], 5.0).unwrap(), (3, 1.0));
        assert_eq!(select_correspondence(&[(9, 7.0), (3, 7.0)], 5.0).unwrap(), (3, 7.0));
    }

    /// Independently coded restatement of the rule for randomized conformance.
    fn rule_oracle(candidates: &[(usize, f64)], bound: f64) -> (usize, f64) {
        let mut within: Vec<(usize, f64)> =
            candidates.iter().copied().filter(|&(_, d)| d <= bound).collect();
        if within.is_empty() {
            let mut all = candidates.to_vec();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            all[0]
        } else {
            within.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            within[0]
        }
    }

    #[test]
    fn select_matches_rule_oracle_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let n = rng.random_range(1..12);
            let candidates: Vec<(usize, f64)> = (0..n)
                .map(|_| (rng.random_range(0..30), rng.random_range(0.0..10.0)))
                .collect();
            let bound = rng.random_range(0.0..10.0);
            assert_eq!(
                select_correspondence(&candidates, bound).unwrap(),
                rule_oracle(&candidates, bound)
            );
        }
    }

    fn grid_cloud(nx: usize, ny: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                pts.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn step_on_identical_clouds_is_a_fixed_point() {
        let cloud = grid_cloud(10, 10, 2.0);
        let params = IcfpParams::default();
        let disp = vec![Point3::default(); cloud.len()];
        let (map, new_disp, residual) = icfp_step(&cloud, &cloud, &params, &disp).unwrap();
        assert_eq!(residual, 0.0);
        for &(i, j, d) in &map.pairs {
            assert_eq!(i, j);
            assert_eq!(d, 0.0);
        }
        for d in new_disp {
            assert_eq!(d, Point3::default());
        }
    }

    fn dense_random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-30.0..30.0),
                        rng.random_range(-30.0..30.0),
                        rng.random_range(-5.0..5.0),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn register_recovers_a_small_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let source = dense_random_cloud(&mut rng, 3000);
        let shift = Point3::new(1.0, 0.0, 0.0);
        let target = source.translated(shift);
        let params = IcfpParams { convergence_tol: 1e-4, ..IcfpParams::default() };
        let result = icfp_register(&source, &target, &params).unwrap();
        assert!(result.residual < 0.01, "residual {}", result.residual);
        for d in &result.displacement {
            assert!(d.sub(shift).norm() < 0.05, "displacement {d:?}");
        }
    }

    #[test]
    fn duplicate_claims_resolve_to_one_target() {
        // One target between two sources: it claims the tied-closer source 0,
        // source 1 falls back to the same target. Both sources map to one
        // target with hand-computed distances.
        let source = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.5, 0.0, 0.0),
        ]);
        let target = PointCloud::new(vec![Point3::new(0.25, 0.0, 0.0)]);
        let disp = vec![Point3::default(); 2];
        let (map, _, _) = icfp_step(&source, &target, &IcfpParams::default(), &disp).unwrap();
        assert_eq!(map.pairs[0], (0, 0, 0.25));
        assert_eq!(map.pairs[1], (1, 0, 0.25));
    }

    #[test]
    fn conflict_beyond_bound_takes_the_farthest_candidate() {
        // Ten targets at distance 0.2 claim source 0; two targets at 4.2 and
        // 4.4 claim source 1. The claim distances give m = 0.8833,
        // σ = 1.5285, l = 3.4818 by hand, so source 1's candidates all lie
        // beyond the bound and the farthest one wins. Source 0's candidates
        // tie at 0.2 and the smaller target index wins.
        let mut targets = Vec::new();
        for k in 0..10 {
            let angle = k as f64 * std::f64::consts::TAU / 10.0;
            targets.push(Point3::new(0.2 * angle.cos(), 0.2 * angle.sin(), 0.0));
        }
        targets.push(Point3::new(104.2, 0.0, 0.0));
        targets.push(Point3::new(104.4, 0.0, 0.0));
        let source = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(100.0, 0.0, 0.0),
        ]);
        let target = PointCloud::new(targets);
        let disp = vec![Point3::default(); 2];
        let (map, _, _) = icfp_step(&source, &target, &IcfpParams::default(), &disp).unwrap();
        assert_eq!(map.pairs[0].1, 0);
        assert!((map.pairs[0].2 - 0.2).abs() < 1e-12);
        assert_eq!(map.pairs[1].1, 11);
        assert!((map.pairs[1].2 - 4.4).abs() < 1e-12);
    }

    #[test]
    fn register_identity_converges_immediately() {
        let cloud = grid_cloud(8, 8, 3.0);
        let result = icfp_register(&cloud, &cloud, &IcfpParams::default()).unwrap();
        assert_eq!(result.residual, 0.0);
        assert!(result.iterations <= 2);
        for &(i, j, _) in &result.map.pairs {
            assert_eq!(i, j);
        }
    }

    fn foot_like_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        // Ellipsoid shell, roughly foot-proportioned (240 x 90 x 60 mm).
        let mut pts = Vec::new();
        while pts.len() < n {
            let u: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let v: f64 = rng.random_range(-1.0f64..1.0).acos();
            pts.push(Point3::new(
                120.0 * v.sin() * u.cos(),
                45.0 * v.sin() * u.sin(),
                30.0 * v.cos(),
            ));
        }
        PointCloud::new(pts)
    }

    #[test]
    fn register_matches_ground_truth_under_small_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let source = foot_like_cloud(&mut rng, 500);
        let angle = 5.0f64.to_radians();
        let (s, c) = angle.sin_cos();
        let target = PointCloud::new(
            source
                .points()
                .iter()
                .map(|p| Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z))
                .collect(),
        );
        let result = icfp_register(&source, &target, &IcfpParams::default()).unwrap();
        let correct = result.map.pairs.iter().filter(|&&(i, j, _)| i == j).count();
        let frac = correct as f64 / source.len() as f64;
        assert!(frac >= 0.95, "only {frac:.3} of pairings match ground truth");
    }

    #[test]
    fn register_terminates_on_disjoint_clouds() {
        let a = grid_cloud(5, 5, 1.0);
        let b = a.translated(Point3::new(1000.0, 1000.0, 1000.0));
        let params = IcfpParams { max_iterations: 8, ..IcfpParams::default() };
        let result = icfp_register(&a, &b, &params).unwrap();
        assert!(result.iterations <= 8);
    }

    #[test]
    fn degenerate_target_is_rejected() {
        let a = grid_cloud(3, 3, 1.0);
        let b = PointCloud::new(vec![Point3::new(1.0, 1.0, 1.0); 5]);
        assert!(matches!(
            icfp_register(&a, &b, &IcfpParams::default()),
            Err(IcfpError::DegenerateTarget)
        ));
    }
}
