use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Point;

pub const SPEED_RANGE: (f64, f64) = (1.0, 5.0);
pub const PAUSE_MAX_S: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub const fn square(side: f64) -> Self {
        Self {
            width: side,
            height: side,
        }
    }

    pub fn clip(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    fn random_point(&self, rng: &mut impl Rng) -> Point {
        Point::new(rng.random_range(0.0..=self.width), rng.random_range(0.0..=self.height))
    }
}

/// Leg state of one node under the random waypoint model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaypointState {
    pub target: Point,
    pub speed: f64,
    pub pause_left: f64,
}

impl WaypointState {
    pub fn new(area: &Area, rng: &mut impl Rng) -> Self {
        Self {
            target: area.random_point(rng),
            speed: rng.random_range(SPEED_RANGE.0..=SPEED_RANGE.1),
            pause_left: 0.0,
        }
    }
}

/// Advances one node by `dt` seconds: move toward the waypoint, pause on
/// arrival, then draw a new waypoint and speed.
pub fn random_waypoint_step(
    pos: Point,
    state: &mut WaypointState,
    dt: f64,
    area: &Area,
    rng: &mut impl Rng,
) -> Point {
    let mut pos = area.clip(pos);
    let mut left = dt.max(0.0);
    while left > 0.0 {
        if state.pause_left > 0.0 {
            let p = state.pause_left.min(left);
            state.pause_left -= p;
            left -= p;
            continue;
        }
        let d = pos.dist(state.target);
        let reach = d / state.speed;
        if reach <= left {
            pos = state.target;
            left -= reach;
            state.pause_left = rng.random_range(0.0..=PAUSE_MAX_S);
            state.target = area.random_point(rng);
            state.speed = rng.random_range(SPEED_RANGE.0..=SPEED_RANGE.1);
        } else {
            let f = left * state.speed / d;
            pos = Point::new(pos.x + (state.target.x - pos.x) * f, pos.y + (state.target.y - pos.y) * f);
            left = 0.0;
        }
    }
    area.clip(pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stays_in_area_and_speeds_positive() {
        let area = Area::square(300.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut st = WaypointState::new(&area, &mut rng);
        let mut p = Point::new(10.0, 10.0);
        for _ in 0..100_000 {
            p = random_waypoint_step(p, &mut st, 0.7, &area, &mut rng);
            assert!((0.0..=300.0).contains(&p.x) && (0.0..=300.0).contains(&p.y));
            assert!(st.speed >= 1.0 && st.speed <= 5.0);
        }
    }

    #[test]
    fn moves_at_most_speed_times_dt() {
        let area = Area::square(1000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = WaypointState::new(&area, &mut rng);
        let mut p = Point::new(500.0, 500.0);
        for _ in 0..1000 {
            let q = random_waypoint_step(p, &mut st, 1.0, &area, &mut rng);
            assert!(p.dist(q) <= 5.0 + 1e-9);
            p = q;
        }
    }

    #[test]
    fn same_stream_same_trajectory() {
        let area = Area::square(100.0);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut st = WaypointState::new(&area, &mut rng);
            let mut p = Point::new(0.0, 0.0);
            (0..500)
                .map(|_| {
                    p = random_waypoint_step(p, &mut st, 0.3, &area, &mut rng);
                    p
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
