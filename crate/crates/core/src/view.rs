//! Virtual camera of the scene view: preset poses around the robot, the
//! perspective/top-down toggle and the damped lock-follow mode.

use serde::{Deserialize, Serialize};

use crate::math::{cos, sin, Vec3};

pub const DEFAULT_KP: f64 = 3.0;
pub const DEFAULT_TICK_HZ: f64 = 60.0;
pub const DEFAULT_DISTANCE: f64 = 3.0;
pub const DEFAULT_HEIGHT: f64 = 2.0;

/// A manual move counts as orbiting when the focus and the eye distance
/// change by less than this, metres.
pub const ORBIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ViewError {
    #[error("invalid view parameter: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewPose {
    pub eye: Vec3,
    pub focus: Vec3,
    pub up: Vec3,
}

impl ViewPose {
    pub fn new(eye: Vec3, focus: Vec3, up: Vec3) -> Result<Self, ViewError> {
        if (eye - focus).norm() < 1e-9 {
            return Err(ViewError::Invalid("eye and focus coincide"));
        }
        let up = up.normalized().ok_or(ViewError::Invalid("zero up vector"))?;
        Ok(Self { eye, focus, up })
    }

    /// Unit viewing direction.
    pub fn direction(&self) -> Vec3 {
        (self.focus - self.eye).normalized().unwrap_or(-Vec3::Z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Perspective,
    OrthoTopDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Left,
    Front,
    Right,
    Back,
}

/// Planar robot pose plus base height, map frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl RobotPose {
    pub fn base(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Camera pose looking at the robot base from one side.
///
/// Front places the eye ahead of the robot (+x in the robot frame), Back
/// behind it, Left on +y and Right on -y; the eye is raised by `height`.
pub fn preset_pose(preset: Preset, robot: RobotPose, distance: f64, height: f64) -> Result<ViewPose, ViewError> {
    if !(distance > 0.0) || !(height > 0.0) {
        return Err(ViewError::Invalid("distance and height must be positive"));
    }
    let local = match preset {
        Preset::Front => Vec3::new(distance, 0.0, 0.0),
        Preset::Back => Vec3::new(-distance, 0.0, 0.0),
        Preset::Left => Vec3::new(0.0, distance, 0.0),
        Preset::Right => Vec3::new(0.0, -distance, 0.0),
    };
    let base = robot.base();
    let eye = base + local.rotate_z(robot.yaw) + Vec3::new(0.0, 0.0, height);
    ViewPose::new(eye, base, Vec3::Z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub pose: ViewPose,
    pub projection: Projection,
    pub locked: bool,
    /// Follow gain, 1/s.
    pub kp: f64,
    /// Eye offset from the robot base kept while locked.
    pub eye_offset: Vec3,
    /// Perspective eye offset from the focus, restored when leaving top-down.
    pub saved_eye_offset: Option<Vec3>,
    pub saved_up: Option<Vec3>,
}

impl ViewState {
    /// `kp * tick` must stay below 1 for the follow loop to be stable.
    pub fn new(pose: ViewPose, kp: f64, tick: f64) -> Result<Self, ViewError> {
        if !(kp > 0.0) || !(tick > 0.0) || kp * tick >= 1.0 {
            return Err(ViewError::Invalid("follow gain must satisfy 0 < kp*dt < 1"));
        }
        Ok(Self {
            pose,
            projection: Projection::Perspective,
            locked: false,
            kp,
            eye_offset: Vec3::ZERO,
            saved_eye_offset: None,
            saved_up: None,
        })
    }

    /// Default view: behind the robot at the default distance and height.
    pub fn default_for(robot: RobotPose) -> Self {
        let pose = preset_pose(Preset::Back, robot, DEFAULT_DISTANCE, DEFAULT_HEIGHT).unwrap_or(ViewPose {
            eye: Vec3::new(-DEFAULT_DISTANCE, 0.0, DEFAULT_HEIGHT),
            focus: Vec3::ZERO,
            up: Vec3::Z,
        });
        let mut s = Self::new(pose, DEFAULT_KP, 1.0 / DEFAULT_TICK_HZ).expect("defaults are stable");
        s.eye_offset = pose.eye - robot.base();
        s
    }

    /// Locks the camera to the robot, keeping the current offset.
    pub fn lock(&mut self, robot_base: Vec3) {
        self.locked = true;
        self.eye_offset = self.pose.eye - robot_base;
    }

    pub fn unlock(&mut self) {
        self.locked = false;
    }

    /// One damped follow step: the eye moves `kp*dt` of the way towards
    /// `robot_base + eye_offset` and the focus moves by the same amount, so
    /// the viewing direction is unchanged. No-op while unlocked.
    pub fn step_follow(&mut self, robot_base: Vec3, dt: f64) {
        if !self.locked {
            return;
        }
        let target = robot_base + self.eye_offset;
        let delta = (target - self.pose.eye) * (self.kp * dt);
        self.pose.eye = self.pose.eye + delta;
        self.pose.focus = self.pose.focus + delta;
    }

    /// Remaining distance to the follow target.
    pub fn follow_error(&self, robot_base: Vec3) -> f64 {
        (robot_base + self.eye_offset - self.pose.eye).norm()
    }

    /// Replaces the pose after a manual camera move. Orbiting about the
    /// focus keeps the lock; any other move unlocks.
    pub fn manual_move(&mut self, new_pose: ViewPose) {
        let old = self.pose;
        let focus_kept = (new_pose.focus - old.focus).norm() < ORBIT_TOLERANCE;
        let dist_kept = ((new_pose.eye - new_pose.focus).norm() - (old.eye - old.focus).norm()).abs() < ORBIT_TOLERANCE;
        if self.locked && focus_kept && dist_kept {
            self.eye_offset = self.eye_offset + (new_pose.eye - old.eye);
        } else {
            self.locked = false;
        }
        self.pose = new_pose;
    }

    /// Switches between perspective and the top-down orthographic view.
    /// Top-down looks along -z with the up vector along the robot heading.
    pub fn toggle_projection(&mut self, robot_yaw: f64) {
        let focus = self.pose.focus;
        let old_eye = self.pose.eye;
        match self.projection {
            Projection::Perspective => {
                let offset = self.pose.eye - focus;
                self.saved_eye_offset = Some(offset);
                self.saved_up = Some(self.pose.up);
                self.pose.eye = focus + Vec3::new(0.0, 0.0, offset.norm().max(1e-3));
                self.pose.up = Vec3::new(cos(robot_yaw), sin(robot_yaw), 0.0);
                self.projection = Projection::OrthoTopDown;
            }
            Projection::OrthoTopDown => {
                let offset = self
                    .saved_eye_offset
                    .take()
                    .unwrap_or(Vec3::new(-DEFAULT_DISTANCE, 0.0, DEFAULT_HEIGHT));
                self.pose.eye = focus + offset;
                self.pose.up = self.saved_up.take().unwrap_or(Vec3::Z);
                self.projection = Projection::Perspective;
            }
        }
        self.eye_offset = self.eye_offset + (self.pose.eye - old_eye);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn presets_at_origin() {
        let r = RobotPose::default();
        let back = preset_pose(Preset::Back, r, 3.0, 2.0).unwrap();
        assert!(close(back.eye, Vec3::new(-3.0, 0.0, 2.0), 1e-12));
        assert_eq!(back.focus, Vec3::ZERO);
        let left = preset_pose(Preset::Left, r, 3.0, 2.0).unwrap();
        assert!(close(left.eye, Vec3::new(0.0, 3.0, 2.0), 1e-12));
        let front = preset_pose(Preset::Front, r, 3.0, 2.0).unwrap();
        assert!(close(front.eye, Vec3::new(3.0, 0.0, 2.0), 1e-12));
        assert!(preset_pose(Preset::Front, r, 0.0, 2.0).is_err());
    }

    #[test]
    fn back_preset_rotated_quarter_turn() {
        // Oracle: rotate the yaw-0 eye offset by 90 degrees about z.
        let at_zero = preset_pose(Preset::Back, RobotPose::default(), 3.0, 2.0).unwrap();
        let expected = at_zero.eye.rotate_z(PI / 2.0);
        let turned = preset_pose(
            Preset::Back,
            RobotPose {
                yaw: PI / 2.0,
                ..Default::default()
            },
            3.0,
            2.0,
        )
        .unwrap();
        assert!(close(turned.eye, expected, 1e-12));
        assert!(close(turned.eye, Vec3::new(0.0, -3.0, 2.0), 1e-12));
    }

    fn locked_state() -> ViewState {
        let pose = preset_pose(Preset::Back, RobotPose::default(), 3.0, 2.0).unwrap();
        let mut s = ViewState::new(pose, 3.0, 1.0 / 60.0).unwrap();
        s.lock(Vec3::ZERO);
        s
    }

    #[test]
    fn unit_step_jumps_to_target() {
        let mut s = locked_state();
        let base = Vec3::new(1.0, 2.0, 0.0);
        s.step_follow(base, 1.0 / s.kp);
        assert!(close(s.pose.eye, base + s.eye_offset, 1e-12));
        assert!(close(s.pose.focus, base, 1e-12));
    }

    #[test]
    fn zero_gain_holds() {
        let mut s = locked_state();
        s.kp = 0.0;
        let before = s.pose;
        s.step_follow(Vec3::new(5.0, 0.0, 0.0), 0.1);
        assert_eq!(s.pose, before);
    }

    #[test]
    fn unstable_gain_rejected() {
        let pose = locked_state().pose;
        assert!(ViewState::new(pose, 60.0, 1.0 / 60.0).is_err());
    }

    #[test]
    fn follow_preserves_direction() {
        let mut s = locked_state();
        let dir = s.pose.direction();
        for i in 0..50 {
            s.step_follow(Vec3::new(0.1 * i as f64, 0.05 * i as f64, 0.0), 1.0 / 60.0);
        }
        assert!(close(s.pose.direction(), dir, 1e-12));
    }

    #[test]
    fn orbit_keeps_lock_translate_breaks_it() {
        let mut s = locked_state();
        let p = s.pose;
        let orbit = ViewPose::new((p.eye - p.focus).rotate_z(0.7) + p.focus, p.focus, Vec3::Z).unwrap();
        s.manual_move(orbit);
        assert!(s.locked);
        // follow continues from the orbited offset
        s.step_follow(Vec3::ZERO, 1.0 / s.kp);
        assert!(close(s.pose.eye, orbit.eye, 1e-12));

        let shifted = ViewPose::new(
            s.pose.eye + Vec3::new(0.5, 0.0, 0.0),
            s.pose.focus + Vec3::new(0.5, 0.0, 0.0),
            Vec3::Z,
        )
        .unwrap();
        s.manual_move(shifted);
        assert!(!s.locked);
        assert_eq!(s.pose, shifted);

        let again = ViewPose::new(shifted.eye + Vec3::X, shifted.focus, Vec3::Z).unwrap();
        s.manual_move(again);
        assert!(!s.locked);
        assert_eq!(s.pose, again);
    }

    #[test]
    fn projection_toggle() {
        let mut s = locked_state();
        let before = s;
        s.toggle_projection(0.0);
        assert_eq!(s.projection, Projection::OrthoTopDown);
        assert!(close(s.pose.direction(), Vec3::new(0.0, 0.0, -1.0), 1e-12));
        assert!(close(s.pose.up, Vec3::X, 1e-12));
        assert!(s.locked);
        s.toggle_projection(0.0);
        assert_eq!(s.projection, Projection::Perspective);
        assert!(close(s.pose.eye, before.pose.eye, 1e-12));
        assert_eq!((s.locked, s.kp), (before.locked, before.kp));
        assert!(close(s.eye_offset, before.eye_offset, 1e-12));
    }

    proptest! {
        #[test]
        fn follow_error_matches_closed_form(
            ex in -10.0f64..10.0, ey in -10.0f64..10.0, ez in 0.5f64..5.0,
            kp in 0.1f64..10.0, dt in 0.001f64..0.09, n in 1usize..200,
        ) {
            prop_assume!(kp * dt <= 1.0);
            let pose = ViewPose::new(Vec3::new(ex, ey, ez), Vec3::ZERO, Vec3::Z).unwrap();
            let mut s = ViewState::new(pose, kp, 1e-3).unwrap_or(ViewState { kp, ..locked_state() });
            s.pose = pose;
            s.kp = kp;
            s.lock(Vec3::ZERO);
            let base = Vec3::new(1.0, -2.0, 0.0);
            let e0 = s.follow_error(base);
            let mut last = e0;
            for _ in 0..n {
                s.step_follow(base, dt);
                let e = s.follow_error(base);
                prop_assert!(e <= last + 1e-12);
                last = e;
            }
            let expected = libm::pow(1.0 - kp * dt, n as f64) * e0;
            prop_assert!((last - expected).abs() < 1e-9, "{} vs {}", last, expected);
        }

        #[test]
        fn presets_are_yaw_equivariant(x in -5.0f64..5.0, y in -5.0f64..5.0, yaw in -3.1f64..3.1, turn in -3.1f64..3.1, which in 0usize..4) {
            let preset = [Preset::Left, Preset::Front, Preset::Right, Preset::Back][which];
            let robot = RobotPose { x, y, z: 0.0, yaw };
            let rotated_robot = RobotPose { x: Vec3::new(x, y, 0.0).rotate_z(turn).x, y: Vec3::new(x, y, 0.0).rotate_z(turn).y, z: 0.0, yaw: yaw + turn };
            let a = preset_pose(preset, rotated_robot, 3.0, 2.0).unwrap();
            let b = preset_pose(preset, robot, 3.0, 2.0).unwrap();
            prop_assert!(close(a.eye, b.eye.rotate_z(turn), 1e-9));
            prop_assert!(close(a.focus, b.focus.rotate_z(turn), 1e-9));
        }
    }
}
