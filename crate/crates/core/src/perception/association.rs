use super::{Detection, ObjectClass, Track};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(track index, detection index)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

impl Association {
    pub fn detection_for(&self, track_idx: usize) -> Option<usize> {
        self.matches.iter().find(|(t, _)| *t == track_idx).map(|&(_, d)| d)
    }
}

/// Association cost between a track and a detection. Same-lane pairs cost
/// their longitudinal distance; adjacent-lane pairs (a lane change in
/// progress) pay an extra half gate. Pairs two or more lanes apart never match.
fn cost(track: &Track, det: &Detection, gate: f64) -> Option<f64> {
    let lane_diff = track.lane.abs_diff(det.lane);
    let c = match lane_diff {
        0 => (track.position - det.position).abs(),
        1 => (track.position - det.position).abs() + 0.5 * gate,
        _ => return None,
    };
    (c <= gate).then_some(c)
}

/// Gated greedy nearest-neighbour assignment. Ties resolve to the lower
/// track id, then the lower detection index.
pub fn associate(tracks: &[Track], detections: &[Detection], gate: f64) -> Association {
    assert!(gate > 0.0, "association gate must be positive");
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            if let Some(c) = cost(t, d, gate) {
                candidates.push((c, ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(tracks[a.1].id.cmp(&tracks[b.1].id)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut matches = Vec::new();
    for (_, ti, di) in candidates {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            matches.push((ti, di));
        }
    }
    matches.sort_unstable();
    Association {
        matches,
        unmatched_detections: (0..detections.len()).filter(|&d| !det_used[d]).collect(),
        unmatched_tracks: (0..tracks.len()).filter(|&t| !track_used[t]).collect(),
    }
}

/// Collapses same-tick detections of one object by different sensors into a
/// single inverse-variance weighted measurement.
pub fn merge_detections(mut detections: Vec<Detection>, gate: f64) -> Vec<Detection> {
    detections.sort_by(|a, b| a.lane.cmp(&b.lane).then(a.position.total_cmp(&b.position)));
    let mut out: Vec<Detection> = Vec::with_capacity(detections.len());
    let mut sensors: Vec<Vec<u16>> = Vec::new();
    for d in detections {
        if let Some(last) = out.last_mut() {
            let seen = sensors.last().expect("parallel to out");
            if last.lane == d.lane && (d.position - last.position).abs() <= gate && !seen.contains(&d.sensor_id) {
                let (wa, wb) = if last.variance == 0.0 || d.variance == 0.0 {
                    // An exact measurement dominates.
                    match (last.variance == 0.0, d.variance == 0.0) {
                        (true, true) => (0.5, 0.5),
                        (true, false) => (1.0, 0.0),
                        _ => (0.0, 1.0),
                    }
                } else {
                    let (ia, ib) = (1.0 / last.variance, 1.0 / d.variance);
                    (ia / (ia + ib), ib / (ia + ib))
                };
                last.position = wa * last.position + wb * d.position;
                last.variance = if last.variance == 0.0 || d.variance == 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 / last.variance + 1.0 / d.variance)
                };
                if last.class == ObjectClass::Unknown {
                    last.class = d.class;
                }
                sensors.last_mut().expect("parallel to out").push(d.sensor_id);
                continue;
            }
        }
        sensors.push(vec![d.sensor_id]);
        out.push(d);
    }
    out
}
