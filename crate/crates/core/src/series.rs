use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive interval of integer times, e.g. `[1880, 2004]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Period {
    pub start: i64,
    pub end: i64,
}

impl Period {
    pub fn new(start: i64, end: i64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: i64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.end < self.start {
            return Err(Error::InvalidConfig(format!(
                "{what} period [{}, {}] is empty",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &Period) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl From<[i64; 2]> for Period {
    fn from(v: [i64; 2]) -> Self {
        Period::new(v[0], v[1])
    }
}

impl From<Period> for [i64; 2] {
    fn from(p: Period) -> Self {
        [p.start, p.end]
    }
}

/// Regularly spaced scalar series on an integer time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<i64>,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Validates equal lengths, finite values, and a strictly increasing
    /// constant-step axis. Series of length 1 are accepted here; operations
    /// state their own minimum lengths.
    pub fn new(times: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::InvalidInput("empty series".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at time {}",
                times[i]
            )));
        }
        if times.len() > 1 {
            let step = times[1] - times[0];
            if step <= 0 {
                return Err(Error::InvalidInput("times must be strictly increasing".into()));
            }
            if let Some(w) = times.windows(2).find(|w| w[1] - w[0] != step) {
                return Err(Error::InvalidInput(format!(
                    "irregular time step between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { times, values })
    }

    /// Series on the axis `start, start + 1, ...`.
    pub fn from_values(start: i64, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len() as i64).map(|i| start + i).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time step of the axis; 1 for single-point series.
    pub fn step(&self) -> i64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            1
        }
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.values)
    }

    /// Sub-series with times inside `period`; errors if the period is not
    /// fully covered by the axis.
    pub fn slice(&self, period: &Period) -> Result<TimeSeries> {
        let step = self.step();
        let first = *self.times.first().unwrap();
        let last = *self.times.last().unwrap();
        if period.start < first || period.end > last {
            return Err(Error::InvalidInput(format!(
                "period [{}, {}] not covered by series [{first}, {last}]",
                period.start, period.end
            )));
        }
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| period.contains(self.times[i]))
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidInput(format!(
                "period [{}, {}] contains no samples (step {step})",
                period.start, period.end
            )));
        }
        Ok(TimeSeries {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_axes() {
        assert!(TimeSeries::new(vec![0, 1, 3], vec![1.0, 2.0, 3.0]).is_err());
        assert!(TimeSeries::new(vec![0, 0, 0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(TimeSeries::new(vec![0, 1], vec![1.0]).is_err());
        assert!(TimeSeries::new(vec![0, 1], vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![0, 5, 10], vec![1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn slice_by_period() {
        let s = TimeSeries::from_values(2000, (0..10).map(f64::from).collect()).unwrap();
        let sub = s.slice(&Period::new(2003, 2005)).unwrap();
        assert_eq!(sub.times(), &[2003, 2004, 2005]);
        assert_eq!(sub.values(), &[3.0, 4.0, 5.0]);
        assert!(s.slice(&Period::new(1999, 2002)).is_err());
    }
}
