use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A calendar quarter, ordered by `(year, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: i32,
    q: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid quarter: {0}")]
pub struct QuarterError(pub String);

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self, QuarterError> {
        if (1..=4).contains(&q) {
            Ok(Self { year, q })
        } else {
            Err(QuarterError(format!("{year} Q{q}")))
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn q(self) -> u8 {
        self.q
    }

    pub fn succ(self) -> Self {
        if self.q == 4 {
            Self { year: self.year + 1, q: 1 }
        } else {
            Self { year: self.year, q: self.q + 1 }
        }
    }

    pub fn pred(self) -> Self {
        if self.q == 1 {
            Self { year: self.year - 1, q: 4 }
        } else {
            Self { year: self.year, q: self.q - 1 }
        }
    }

    /// Quarters elapsed since year 0 Q1.
    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_index(i: i64) -> Self {
        Self { year: i.div_euclid(4) as i32, q: (i.rem_euclid(4) + 1) as u8 }
    }

    pub fn offset(self, quarters: i64) -> Self {
        Self::from_index(self.index() + quarters)
    }

    /// Midpoint of the quarter in fractional years: `year + (q − 0.5)/4`.
    pub fn time(self) -> f64 {
        self.year as f64 + (self.q as f64 - 0.5) / 4.0
    }

    /// The quarter containing fractional-year time `t`.
    pub fn containing(t: f64) -> Self {
        Self::from_index((t * 4.0).floor() as i64)
    }

    /// Inclusive range of quarters.
    pub fn range(from: Quarter, to: Quarter) -> impl Iterator<Item = Quarter> {
        (from.index()..=to.index()).map(Quarter::from_index)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = QuarterError;

    /// Accepts `2012Q4`, `2012-Q4` and `2012 Q4`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || QuarterError(s.to_string());
        let upper = s.trim().to_ascii_uppercase();
        let (y, q) = upper.split_once('Q').ok_or_else(bad)?;
        let y = y.trim_end_matches(['-', ' ']);
        let year: i32 = y.parse().map_err(|_| bad())?;
        let q: u8 = q.trim().parse().map_err(|_| bad())?;
        Quarter::new(year, q).map_err(|_| bad())
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_times() {
        assert_eq!(Quarter::new(2005, 1).unwrap().time(), 2005.125);
        assert_eq!(Quarter::new(2012, 4).unwrap().time(), 2012.875);
    }

    #[test]
    fn successor_wraps_year() {
        let q = Quarter::new(2012, 4).unwrap();
        assert_eq!(q.succ(), Quarter::new(2013, 1).unwrap());
        assert_eq!(q.succ().pred(), q);
        assert_eq!(q.succ().time() - q.time(), 0.25);
    }

    #[test]
    fn parse_forms() {
        for s in ["2012Q4", "2012-Q4", "2012 q4"] {
            assert_eq!(s.parse::<Quarter>().unwrap(), Quarter::new(2012, 4).unwrap());
        }
        assert!("2012Q5".parse::<Quarter>().is_err());
        assert!("Q1".parse::<Quarter>().is_err());
        assert!(Quarter::new(2000, 0).is_err());
    }

    #[test]
    fn containing_inverts_time() {
        let q = Quarter::new(2013, 3).unwrap();
        assert_eq!(Quarter::containing(q.time()), q);
        assert_eq!(Quarter::containing(2013.0), Quarter::new(2013, 1).unwrap());
        assert_eq!(Quarter::containing(2012.999), Quarter::new(2012, 4).unwrap());
    }

    proptest! {
        #[test]
        fn time_is_order_embedding(a in -4000i64..12000, b in -4000i64..12000) {
            let (qa, qb) = (Quarter::from_index(a), Quarter::from_index(b));
            prop_assert_eq!(qa.cmp(&qb), a.cmp(&b));
            prop_assert_eq!(qa.time().partial_cmp(&qb.time()), Some(a.cmp(&b)));
            prop_assert_eq!(qa.index(), a);
        }
    }
}
