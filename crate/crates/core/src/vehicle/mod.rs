//! Planar vehicle models.
//!
//! Axes follow the sign convention used throughout the crate: x forward,
//! y to the right, z down, so a positive yaw rate is a right turn and a
//! positive slip angle produces a force to the right. Front wheels sit at
//! +lf, the right side of the car at +track/2.
//!
//! [`plant`] holds the four-wheel simulation truth model. This module has
//! the shared parameter set, the linear bicycle reference that converts a
//! steering command into a desired yaw rate, and the axle force recovery
//! used by the controller. [`estimator`] tracks the axle cornering
//! stiffnesses online.

pub mod estimator;
pub mod plant;

pub use estimator::{estimate_stiffness_from_log, RlsSample, RlsStiffnessEstimator, StiffnessEstimate};
pub use plant::{PlantDiagnostics, PlantState, TireSetup, WHEEL_NAMES};

use crate::error::{Error, Result};
use crate::textio::{KvFile, KvSection};
use crate::GRAVITY;
use std::path::Path;

/// Rigid body and chassis geometry of the simulated car.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParameters {
    /// Total mass, kg.
    pub mass_kg: f64,
    /// Yaw moment of inertia, kg m^2.
    pub yaw_inertia_kgm2: f64,
    /// Front axle to center of gravity, m.
    pub front_axle_to_cg_m: f64,
    /// Rear axle to center of gravity, m.
    pub rear_axle_to_cg_m: f64,
    /// Track width, m.
    pub track_width_m: f64,
    /// Center of gravity height, m.
    pub cg_height_m: f64,
    /// Loaded wheel radius, m.
    pub wheel_radius_m: f64,
    /// Spin inertia of one wheel, kg m^2.
    pub wheel_inertia_kgm2: f64,
    /// Handwheel angle per road wheel angle.
    pub steering_ratio: f64,
    /// Share of the total lateral load transfer carried by the front
    /// axle. Higher values push the balance toward limit understeer.
    pub front_roll_couple: f64,
    /// Aerodynamic drag force per squared speed, N s^2/m^2.
    pub aero_drag_coeff: f64,
    /// Speed-independent rolling resistance, N.
    pub rolling_resistance_n: f64,
}

impl Default for VehicleParameters {
    fn default() -> Self {
        Self {
            mass_kg: 1500.0,
            yaw_inertia_kgm2: 2500.0,
            front_axle_to_cg_m: 1.2,
            rear_axle_to_cg_m: 1.5,
            track_width_m: 1.5,
            cg_height_m: 0.5,
            wheel_radius_m: 0.3,
            wheel_inertia_kgm2: 1.2,
            steering_ratio: 16.0,
            front_roll_couple: 0.65,
            aero_drag_coeff: 0.38,
            rolling_resistance_n: 135.0,
        }
    }
}

impl VehicleParameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.mass_kg, "mass"),
            (self.yaw_inertia_kgm2, "yaw inertia"),
            (self.front_axle_to_cg_m, "front axle distance"),
            (self.rear_axle_to_cg_m, "rear axle distance"),
            (self.track_width_m, "track width"),
            (self.cg_height_m, "cg height"),
            (self.wheel_radius_m, "wheel radius"),
            (self.wheel_inertia_kgm2, "wheel inertia"),
            (self.steering_ratio, "steering ratio"),
        ];
        for (value, what) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidCoefficients(format!(
                    "{what} {value} must be positive"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.front_roll_couple) {
            return Err(Error::InvalidCoefficients(format!(
                "front roll couple {} must lie in [0, 1]",
                self.front_roll_couple
            )));
        }
        if self.aero_drag_coeff < 0.0 || self.rolling_resistance_n < 0.0 {
            return Err(Error::InvalidCoefficients(
                "drag terms must not be negative".into(),
            ));
        }
        Ok(())
    }

    #[must_use]
    pub fn wheelbase_m(&self) -> f64 {
        self.front_axle_to_cg_m + self.rear_axle_to_cg_m
    }

    /// Static front axle load, N.
    #[must_use]
    pub fn front_axle_load_n(&self) -> f64 {
        self.mass_kg * GRAVITY * self.rear_axle_to_cg_m / self.wheelbase_m()
    }

    /// Static rear axle load, N.
    #[must_use]
    pub fn rear_axle_load_n(&self) -> f64 {
        self.mass_kg * GRAVITY * self.front_axle_to_cg_m / self.wheelbase_m()
    }

    /// Understeer gradient for the given axle cornering stiffnesses,
    /// rad/(m/s^2).
    #[must_use]
    pub fn understeer_gradient(&self, front_stiffness: f64, rear_stiffness: f64) -> f64 {
        understeer_gradient(
            self.front_axle_load_n(),
            self.rear_axle_load_n(),
            front_stiffness,
            rear_stiffness,
        )
    }

    #[must_use]
    pub fn to_kv_section(&self) -> KvSection {
        let mut s = KvSection::new("vehicle");
        s.set_f64("mass_kg", self.mass_kg);
        s.set_f64("yaw_inertia_kgm2", self.yaw_inertia_kgm2);
        s.set_f64("front_axle_to_cg_m", self.front_axle_to_cg_m);
        s.set_f64("rear_axle_to_cg_m", self.rear_axle_to_cg_m);
        s.set_f64("track_width_m", self.track_width_m);
        s.set_f64("cg_height_m", self.cg_height_m);
        s.set_f64("wheel_radius_m", self.wheel_radius_m);
        s.set_f64("wheel_inertia_kgm2", self.wheel_inertia_kgm2);
        s.set_f64("steering_ratio", self.steering_ratio);
        s.set_f64("front_roll_couple", self.front_roll_couple);
        s.set_f64("aero_drag_coeff", self.aero_drag_coeff);
        s.set_f64("rolling_resistance_n", self.rolling_resistance_n);
        s
    }

    /// Reads a `[vehicle]` section, falling back to defaults for missing
    /// keys.
    pub fn from_kv_section(section: &KvSection) -> Result<Self> {
        let d = Self::default();
        let p = Self {
            mass_kg: section.f64_or("mass_kg", d.mass_kg)?,
            yaw_inertia_kgm2: section.f64_or("yaw_inertia_kgm2", d.yaw_inertia_kgm2)?,
            front_axle_to_cg_m: section.f64_or("front_axle_to_cg_m", d.front_axle_to_cg_m)?,
            rear_axle_to_cg_m: section.f64_or("rear_axle_to_cg_m", d.rear_axle_to_cg_m)?,
            track_width_m: section.f64_or("track_width_m", d.track_width_m)?,
            cg_height_m: section.f64_or("cg_height_m", d.cg_height_m)?,
            wheel_radius_m: section.f64_or("wheel_radius_m", d.wheel_radius_m)?,
            wheel_inertia_kgm2: section.f64_or("wheel_inertia_kgm2", d.wheel_inertia_kgm2)?,
            steering_ratio: section.f64_or("steering_ratio", d.steering_ratio)?,
            front_roll_couple: section.f64_or("front_roll_couple", d.front_roll_couple)?,
            aero_drag_coeff: section.f64_or("aero_drag_coeff", d.aero_drag_coeff)?,
            rolling_resistance_n: section.f64_or("rolling_resistance_n", d.rolling_resistance_n)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = KvFile::new();
        file.push(self.to_kv_section());
        file.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = KvFile::read(path)?;
        Self::from_kv_section(file.require_section("vehicle")?)
    }
}

/// Understeer gradient from axle loads and axle cornering stiffnesses,
/// rad/(m/s^2). Positive means the car pushes wide of the neutral line as
/// speed rises.
#[must_use]
pub fn understeer_gradient(
    front_load_n: f64,
    rear_load_n: f64,
    front_stiffness: f64,
    rear_stiffness: f64,
) -> f64 {
    front_load_n / front_stiffness - rear_load_n / rear_stiffness
}

/// Steady-state bicycle model used as the yaw rate reference.
#[derive(Debug, Clone, Copy)]
pub struct BicycleReference {
    pub params: VehicleParameters,
    /// Front axle cornering stiffness, N/rad.
    pub front_stiffness: f64,
    /// Rear axle cornering stiffness, N/rad.
    pub rear_stiffness: f64,
    /// Friction coefficient bounding the achievable lateral acceleration.
    pub friction: f64,
}

impl BicycleReference {
    /// Yaw rate the driver is asking for, rad/s. The kinematic value is
    /// capped at what the friction budget can hold, keeping its sign.
    #[must_use]
    pub fn desired_yaw_rate(&self, speed: f64, road_wheel_angle: f64) -> f64 {
        if speed <= 0.1 {
            return 0.0;
        }
        let kus = self
            .params
            .understeer_gradient(self.front_stiffness, self.rear_stiffness);
        let raw = speed * road_wheel_angle
            / (self.params.wheelbase_m() + kus * speed * speed / GRAVITY);
        let cap = self.friction * GRAVITY / speed;
        raw.clamp(-cap, cap)
    }

    /// The speed above which an oversteering setup becomes unstable, m/s.
    /// `None` for neutral and understeering setups.
    #[must_use]
    pub fn critical_speed(&self) -> Option<f64> {
        let kus = self
            .params
            .understeer_gradient(self.front_stiffness, self.rear_stiffness);
        if kus >= 0.0 {
            None
        } else {
            Some((-self.params.wheelbase_m() * GRAVITY / kus).sqrt())
        }
    }
}

/// Recovers per-axle lateral forces from measured lateral acceleration and
/// yaw acceleration by inverting the planar force and moment balance.
pub fn axle_forces_from_measurements(
    params: &VehicleParameters,
    road_wheel_angle: f64,
    lateral_acc: f64,
    yaw_acc: f64,
) -> Result<(f64, f64)> {
    let wheelbase = params.wheelbase_m();
    let cos_d = road_wheel_angle.cos();
    if (cos_d * wheelbase).abs() < 1e-6 {
        return Err(Error::SingularInversion {
            angle: road_wheel_angle,
        });
    }
    let m_ay = params.mass_kg * lateral_acc;
    let i_rdot = params.yaw_inertia_kgm2 * yaw_acc;
    let front = (m_ay * params.rear_axle_to_cg_m + i_rdot) / (wheelbase * cos_d);
    let rear = (m_ay * params.front_axle_to_cg_m - i_rdot) / wheelbase;
    Ok((front, rear))
}
