//! Vehicle classes and the longitudinal/lateral update rules.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::net::EdgeId;

/// Speed below which a vehicle counts as waiting (m/s).
pub const WAITING_SPEED: f64 = 0.1;

/// Bounds applied to sampled speed factors.
pub const SPEED_FACTOR_CLIP: (f64, f64) = (0.7, 1.3);

/// Leader must be this much slower (m/s) before overtaking is considered.
pub const OVERTAKE_SPEED_MARGIN: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleClassSpec {
    pub name: String,
    /// m/s²
    pub accel: f64,
    pub decel: f64,
    pub emergency_decel: f64,
    /// Driver imperfection in [0, 1].
    pub sigma: f64,
    /// Standstill gap to the leader, meters.
    pub min_gap: f64,
    pub lc_assertive: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// persons
    pub capacity: u32,
    /// Reaction time, seconds.
    pub tau: f64,
    pub speed_factor_mean: f64,
    pub speed_factor_sd: f64,
    /// Rerouting cadence; `None` disables the rerouting device.
    pub reroute_period: Option<f64>,
    pub reroute_pre_period: f64,
    pub reroute_threshold: f64,
    /// Extra multiplier on the edge limit (post-disaster speed reduction).
    pub speed_factor_cap: Option<f64>,
}

/// Names of the built-in presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BuiltinClass {
    SavPre,
    SavPost,
    HdvPre,
    HdvPost,
    Bus,
}

impl BuiltinClass {
    pub const ALL: [BuiltinClass; 5] = [
        BuiltinClass::SavPre,
        BuiltinClass::SavPost,
        BuiltinClass::HdvPre,
        BuiltinClass::HdvPost,
        BuiltinClass::Bus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinClass::SavPre => "sav_pre",
            BuiltinClass::SavPost => "sav_post",
            BuiltinClass::HdvPre => "hdv_pre",
            BuiltinClass::HdvPost => "hdv_post",
            BuiltinClass::Bus => "bus",
        }
    }
}

impl FromStr for BuiltinClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ModelError::UnknownClass(s.to_string()))
    }
}

/// Returns one of the built-in vehicle presets by name.
pub fn builtin_class(name: &str) -> Result<VehicleClassSpec, ModelError> {
    Ok(BuiltinClass::from_str(name)?.spec())
}

impl BuiltinClass {
    pub fn spec(self) -> VehicleClassSpec {
        let sav = VehicleClassSpec {
            name: String::new(),
            accel: 3.5,
            decel: 4.5,
            emergency_decel: 8.0,
            sigma: 0.0,
            min_gap: 1.5,
            lc_assertive: 0.7,
            length: 8.0,
            width: 2.5,
            height: 3.4,
            capacity: 25,
            tau: 1.0,
            speed_factor_mean: 1.0,
            speed_factor_sd: 0.0,
            reroute_period: Some(60.0),
            reroute_pre_period: 300.0,
            reroute_threshold: 0.0,
            speed_factor_cap: None,
        };
        let hdv = VehicleClassSpec {
            name: String::new(),
            accel: 2.6,
            decel: 4.5,
            emergency_decel: 8.0,
            sigma: 0.5,
            min_gap: 2.5,
            lc_assertive: 1.3,
            length: 5.0,
            width: 1.8,
            height: 1.5,
            capacity: 5,
            tau: 1.0,
            speed_factor_mean: 1.0,
            speed_factor_sd: 0.1,
            reroute_period: None,
            reroute_pre_period: 300.0,
            reroute_threshold: 0.0,
            speed_factor_cap: None,
        };
        let mut spec = match self {
            BuiltinClass::SavPre => sav,
            BuiltinClass::SavPost => VehicleClassSpec {
                reroute_period: Some(180.0),
                reroute_threshold: 0.1,
                speed_factor_cap: Some(0.9),
                ..sav
            },
            BuiltinClass::HdvPre => hdv,
            BuiltinClass::HdvPost => VehicleClassSpec { speed_factor_cap: Some(0.9), ..hdv },
            // Conventional bus: SUMO-default body size, no rerouting device.
            BuiltinClass::Bus => VehicleClassSpec {
                accel: 1.0,
                decel: 2.5,
                emergency_decel: 5.0,
                sigma: 0.8,
                min_gap: 5.0,
                lc_assertive: 1.3,
                length: 12.0,
                width: 2.5,
                height: 3.4,
                capacity: 25,
                tau: 2.0,
                ..hdv
            },
        };
        spec.name = self.as_str().to_string();
        spec
    }
}

impl VehicleClassSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::InvalidClass { name: self.name.clone(), reason: reason.to_string() })
        };
        if !(self.accel > 0.0 && self.decel > 0.0 && self.emergency_decel > 0.0) {
            return fail("accel, decel and emergency_decel must be positive");
        }
        if self.emergency_decel < self.decel {
            return fail("emergency_decel must be >= decel");
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return fail("sigma must lie in [0, 1]");
        }
        if self.min_gap <= 0.0 || self.length <= 0.0 {
            return fail("min_gap and length must be positive");
        }
        if self.capacity < 1 {
            return fail("capacity must be >= 1");
        }
        if self.tau <= 0.0 || self.lc_assertive <= 0.0 {
            return fail("tau and lc_assertive must be positive");
        }
        if self.speed_factor_mean <= 0.0 || self.speed_factor_sd < 0.0 {
            return fail("speed factor mean must be positive and sd nonnegative");
        }
        if let Some(p) = self.reroute_period {
            if p <= 0.0 {
                return fail("reroute_period must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.reroute_threshold) {
            return fail("reroute_threshold must lie in [0, 1)");
        }
        if self.reroute_pre_period < 0.0 {
            return fail("reroute_pre_period must be nonnegative");
        }
        if let Some(cap) = self.speed_factor_cap {
            if cap <= 0.0 {
                return fail("speed_factor_cap must be positive");
            }
        }
        Ok(())
    }

    pub fn reroutes(&self) -> bool {
        self.reroute_period.is_some()
    }

    /// Applies a JSON object of field overrides on top of this spec.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self, ModelError> {
        let invalid = |reason: String| ModelError::InvalidClass { name: self.name.clone(), reason };
        let mut value = serde_json::to_value(self).expect("class spec serializes");
        let (Some(target), Some(patch)) = (value.as_object_mut(), overrides.as_object()) else {
            return Err(invalid("overrides must be a JSON object".into()));
        };
        for (k, v) in patch {
            target.insert(k.clone(), v.clone());
        }
        let spec: VehicleClassSpec = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Lookup table of vehicle classes by name.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRegistry {
    classes: BTreeMap<String, VehicleClassSpec>,
}

impl Default for ClassRegistry {
    fn default() -> Self {
        ClassRegistry {
            classes: BuiltinClass::ALL
                .into_iter()
                .map(|c| (c.as_str().to_string(), c.spec()))
                .collect(),
        }
    }
}

impl ClassRegistry {
    pub fn get(&self, name: &str) -> Option<&VehicleClassSpec> {
        self.classes.get(name)
    }

    /// Inserts or replaces a class after validating it.
    pub fn insert(&mut self, spec: VehicleClassSpec) -> Result<(), ModelError> {
        spec.validate()?;
        self.classes.insert(spec.name.clone(), spec);
        Ok(())
    }

    /// Patches an existing class (or a builtin) with JSON field overrides.
    pub fn apply_override(&mut self, name: &str, overrides: &serde_json::Value) -> Result<(), ModelError> {
        let base = self.get(name).ok_or_else(|| ModelError::UnknownClass(name.to_string()))?;
        let spec = base.with_overrides(overrides)?;
        self.classes.insert(name.to_string(), spec);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &VehicleClassSpec> {
        self.classes.values()
    }
}

/// Dynamic state of one simulated vehicle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VehicleState {
    pub id: usize,
    pub class: String,
    pub route: Vec<EdgeId>,
    pub route_cursor: usize,
    pub position_on_edge: f64,
    pub speed: f64,
    pub depart_time: f64,
    pub insert_time: Option<f64>,
    pub waiting_time: f64,
    pub speed_factor: f64,
    /// Time of the last reroute evaluation.
    pub last_reroute_time: Option<f64>,
    pub distance_traveled: f64,
    pub arrived: bool,
    pub arrival_time: Option<f64>,
    pub teleport_count: u32,
}

impl VehicleState {
    pub fn new(id: usize, class: &str, route: Vec<EdgeId>, depart_time: f64, speed_factor: f64) -> Self {
        VehicleState {
            id,
            class: class.to_string(),
            route,
            route_cursor: 0,
            position_on_edge: 0.0,
            speed: 0.0,
            depart_time,
            insert_time: None,
            waiting_time: 0.0,
            speed_factor,
            last_reroute_time: None,
            distance_traveled: 0.0,
            arrived: false,
            arrival_time: None,
            teleport_count: 0,
        }
    }

    pub fn current_edge(&self) -> EdgeId {
        self.route[self.route_cursor]
    }

    pub fn next_edge(&self) -> Option<EdgeId> {
        self.route.get(self.route_cursor + 1).copied()
    }

    pub fn destination(&self) -> EdgeId {
        *self.route.last().expect("route is never empty")
    }

    pub fn on_last_edge(&self) -> bool {
        self.route_cursor + 1 == self.route.len()
    }
}

/// Krauss safe speed: the largest follower speed that still allows a stop
/// behind a leader braking at `decel`.
pub fn krauss_safe_speed(v_leader: f64, gap: f64, decel: f64, tau: f64) -> Result<f64, ModelError> {
    if gap < 0.0 {
        return Err(ModelError::NegativeGap(gap));
    }
    let bt = decel * tau;
    let v = -bt + (bt * bt + v_leader * v_leader + 2.0 * decel * gap).sqrt();
    Ok(v.max(0.0))
}

/// Upper speed bound from the edge limit, the personal speed factor and the
/// optional class cap.
pub fn speed_ceiling(speed_factor: f64, spec: &VehicleClassSpec, v_limit: f64) -> f64 {
    let limit = match spec.speed_factor_cap {
        Some(cap) => v_limit.min(cap * v_limit),
        None => v_limit,
    };
    speed_factor * limit
}

/// One Krauss update. `leader` is `(v_leader, gap)` with `gap` already net
/// of the follower's `min_gap`.
pub fn krauss_step(
    state: &VehicleState,
    leader: Option<(f64, f64)>,
    spec: &VehicleClassSpec,
    v_limit: f64,
    dt: f64,
    noise: f64,
) -> Result<f64, ModelError> {
    let mut v_des = (state.speed + spec.accel * dt).min(speed_ceiling(state.speed_factor, spec, v_limit));
    if let Some((v_leader, gap)) = leader {
        v_des = v_des.min(krauss_safe_speed(v_leader, gap, spec.decel, spec.tau)?);
    }
    Ok((v_des - spec.sigma * spec.accel * dt * noise).max(0.0))
}

/// Draws a personal speed factor, clipped to [`SPEED_FACTOR_CLIP`].
pub fn sample_speed_factor<R: Rng + ?Sized>(spec: &VehicleClassSpec, rng: &mut R) -> f64 {
    if spec.speed_factor_sd == 0.0 {
        return spec.speed_factor_mean;
    }
    let normal = Normal::new(spec.speed_factor_mean, spec.speed_factor_sd).expect("validated sd");
    clip_speed_factor(normal.sample(rng))
}

/// Speed factor from a standard-normal draw `z`; lets callers keep one draw
/// per vehicle regardless of class.
pub fn speed_factor_from_normal(spec: &VehicleClassSpec, z: f64) -> f64 {
    if spec.speed_factor_sd == 0.0 {
        return spec.speed_factor_mean;
    }
    clip_speed_factor(spec.speed_factor_mean + spec.speed_factor_sd * z)
}

pub fn clip_speed_factor(x: f64) -> f64 {
    x.clamp(SPEED_FACTOR_CLIP.0, SPEED_FACTOR_CLIP.1)
}

/// Gap (meters) a follower needs in the adjacent lane before overtaking.
pub fn required_overtake_gap(follower_speed: f64, spec: &VehicleClassSpec) -> f64 {
    (spec.min_gap + follower_speed * spec.tau) / spec.lc_assertive
}

/// Overtake iff the leader is slower by more than the margin and the
/// adjacent-lane gap covers the assertiveness-scaled requirement.
pub fn overtake_decision(follower_speed: f64, leader_speed: f64, adjacent_gap: f64, spec: &VehicleClassSpec) -> bool {
    leader_speed < follower_speed - OVERTAKE_SPEED_MARGIN
        && adjacent_gap >= required_overtake_gap(follower_speed, spec)
}
