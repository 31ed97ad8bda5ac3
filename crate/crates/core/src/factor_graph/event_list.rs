use crate::error::{Error, Result};

/// Position and velocity of one coordinate from `time` onwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateEvent {
    pub position: f64,
    pub velocity: f64,
    pub time: f64,
}

/// Sparse record of a single coordinate's path: one entry per velocity
/// change, with strictly increasing times starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateEventList {
    events: Vec<CoordinateEvent>,
}

impl CoordinateEventList {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self {
            events: vec![CoordinateEvent {
                position,
                velocity,
                time: 0.0,
            }],
        }
    }

    /// Builds a list from raw entries, checking times and continuity.
    pub fn from_events(events: Vec<CoordinateEvent>) -> Result<Self> {
        let list = Self { events };
        if list.events.first().map(|e| e.time) != Some(0.0) {
            return Err(Error::InvalidParameter("event list must start at time 0".into()));
        }
        list.check_consistency(1e-10)?;
        Ok(list)
    }

    /// Appends an entry; an entry at the time of the last one replaces it.
    pub fn push(&mut self, position: f64, velocity: f64, time: f64) {
        let last = self.last();
        debug_assert!(time >= last.time, "event list times must not decrease");
        let e = CoordinateEvent {
            position,
            velocity,
            time,
        };
        if time == last.time {
            *self.events.last_mut().unwrap() = e;
        } else {
            self.events.push(e);
        }
    }

    pub fn last(&self) -> &CoordinateEvent {
        self.events.last().expect("event lists are never empty")
    }

    pub fn events(&self) -> &[CoordinateEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Position at `t` assuming no event after the last entry.
    pub fn extrapolate(&self, t: f64) -> f64 {
        let e = self.last();
        e.position + e.velocity * (t - e.time)
    }

    /// Position at `t`, interpolated from the latest entry at or before `t`.
    pub fn position_at(&self, t: f64) -> Result<f64> {
        let first = self.events[0].time;
        if !(t >= first) {
            return Err(Error::OutOfRange {
                time: t,
                start: first,
                end: self.last().time,
            });
        }
        let i = self.events.partition_point(|e| e.time <= t) - 1;
        let e = &self.events[i];
        Ok(e.position + e.velocity * (t - e.time))
    }

    /// Linear pieces `(start_time, position, velocity, duration)` covering
    /// `[0, horizon]`.
    pub fn segments(&self, horizon: f64) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.events.iter().enumerate().filter_map(move |(i, e)| {
            let end = self.events.get(i + 1).map_or(horizon, |n| n.time).min(horizon);
            (end > e.time).then_some((e.time, e.position, e.velocity, end - e.time))
        })
    }

    /// Checks increasing times and continuity between consecutive entries.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        for w in self.events.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::InvalidParameter(format!(
                    "event times not increasing: {} then {}",
                    w[0].time, w[1].time
                )));
            }
            let predicted = w[0].position + w[0].velocity * (w[1].time - w[0].time);
            if (predicted - w[1].position).abs() > tol * (1.0 + predicted.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "discontinuity at t = {}: expected {predicted}, recorded {}",
                    w[1].time, w[1].position
                )));
            }
        }
        Ok(())
    }
}

/// Position of coordinate `k` at time `t` from its event list.
pub fn reconstruct_coordinate(list: &CoordinateEventList, t: f64) -> Result<f64> {
    list.position_at(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruct_examples() {
        let l = CoordinateEventList::new(0.0, 1.0);
        assert_eq!(reconstruct_coordinate(&l, 1.0).unwrap(), 1.0);

        let mut l = CoordinateEventList::new(0.0, 1.0);
        l.push(2.0, -1.0, 2.0);
        assert_eq!(reconstruct_coordinate(&l, 3.0).unwrap(), 1.0);
        assert_eq!(reconstruct_coordinate(&l, 2.0).unwrap(), 2.0);
        assert!(reconstruct_coordinate(&l, -1.0).is_err());
    }

    #[test]
    fn same_time_push_replaces() {
        let mut l = CoordinateEventList::new(0.0, 1.0);
        l.push(0.0, 2.0, 0.0);
        assert_eq!(l.len(), 1);
        assert_eq!(l.last().velocity, 2.0);
    }

    #[test]
    fn segments_cover_horizon() {
        let mut l = CoordinateEventList::new(0.0, 1.0);
        l.push(1.0, -1.0, 1.0);
        l.push(0.5, 2.0, 1.5);
        let s: Vec<_> = l.segments(2.0).collect();
        assert_eq!(s, vec![(0.0, 0.0, 1.0, 1.0), (1.0, 1.0, -1.0, 0.5), (1.5, 0.5, 2.0, 0.5)]);
    }

    #[test]
    fn inconsistent_list_is_rejected() {
        let events = vec![
            CoordinateEvent { position: 0.0, velocity: 1.0, time: 0.0 },
            CoordinateEvent { position: 3.0, velocity: 1.0, time: 1.0 },
        ];
        assert!(CoordinateEventList::from_events(events).is_err());
    }
}
