use super::{Detection, ObjectClass, SensorSpec};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Ground-truth state of an object as seen by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthObject {
    pub id: u32,
    pub class: ObjectClass,
    pub position: f64,
    pub lane: u8,
}

/// Simulates one sensor tick: each covered object is detected independently
/// with the sensor's probability and measured with Gaussian position noise.
/// Measured positions never leave the sensor's coverage interval.
pub fn sense<R: Rng + ?Sized>(
    objects: &[TruthObject],
    spec: &SensorSpec,
    sensor_id: u16,
    now: f64,
    rng: &mut R,
) -> Vec<Detection> {
    let noise = Normal::new(0.0, spec.noise_std).expect("noise std validated non-negative");
    let mut out = Vec::new();
    for obj in objects.iter().filter(|o| spec.covers(o.position)) {
        // Draws happen in a fixed order per object so the stream stays aligned
        // regardless of outcomes.
        let detected = rng.random::<f64>() < spec.detection_probability;
        let err = noise.sample(rng);
        let confused = rng.random::<f64>() < spec.class_confusion;
        let measured = obj.position + err;
        // Measurements that land outside the covered interval are discarded.
        if !detected || !spec.covers(measured) {
            continue;
        }
        out.push(Detection {
            sensor_id,
            timestamp: now,
            position: measured,
            lane: obj.lane,
            class: if confused { ObjectClass::Unknown } else { obj.class },
            variance: spec.noise_std * spec.noise_std,
        });
    }
    out
}
