use crate::num::trapezoid;

use super::params::Utilization;
use super::power::AffinePowerModel;
use super::DomainError;

/// Energy drawn over a run together with the data it moved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyAccount {
    pub joules_total: f64,
    pub watt_samples: Vec<(f64, f64)>,
    pub data_bytes: f64,
}

impl EnergyAccount {
    /// Account whose total is the trapezoidal integral of `watt_samples`.
    pub fn from_samples(watt_samples: Vec<(f64, f64)>, data_bytes: f64) -> Self {
        let joules_total = trapezoid(&watt_samples);
        Self { joules_total, watt_samples, data_bytes }
    }

    /// Appends a constant-power interval as a step, so the trapezoid over the
    /// samples equals `watts * (t1 - t0)` summed over intervals.
    pub fn push_interval(&mut self, t0: f64, t1: f64, watts: f64) {
        self.watt_samples.push((t0, watts));
        self.watt_samples.push((t1, watts));
        self.joules_total += watts * (t1 - t0);
    }

    pub fn add_bytes(&mut self, bytes: f64) {
        self.data_bytes += bytes;
    }

    /// Re-integrates the stored samples.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.watt_samples)
    }

    /// Bytes per joule, `None` before any energy has been spent.
    pub fn efficiency(&self) -> Option<f64> {
        (self.joules_total > 0.0).then(|| self.data_bytes / self.joules_total)
    }
}

/// Per-process utilization sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UtilizationSeries {
    pub times: Vec<f64>,
    pub samples: Vec<Utilization>,
}

/// Energy of processes sharing one end system; power at each instant is the
/// model intercept plus the sum of per-process dynamic parts.
pub fn total_energy(
    processes: &[UtilizationSeries],
    model: &AffinePowerModel<f64>,
) -> Result<EnergyAccount, DomainError> {
    let Some(first) = processes.first() else {
        return Ok(EnergyAccount::default());
    };
    let grid = &first.times;
    for s in processes {
        if s.samples.len() != grid.len() || s.times != *grid {
            return Err(DomainError::GridMismatch);
        }
    }
    let mut watts = Vec::with_capacity(grid.len());
    let mut rates = Vec::with_capacity(grid.len());
    for (k, t) in grid.iter().enumerate() {
        let feats: Vec<[f64; 10]> = processes.iter().map(|s| s.samples[k].features()).collect();
        watts.push((*t, model.predict_processes(feats.iter())));
        rates.push((*t, processes.iter().map(|s| s.samples[k].net_bytes_sent).sum::<f64>()));
    }
    Ok(EnergyAccount::from_samples(watts, trapezoid(&rates)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FEATURE_COUNT;

    fn cpu_model(c: f64, intercept: f64) -> AffinePowerModel<f64> {
        let mut coef = [0.0; FEATURE_COUNT];
        coef[0] = c;
        AffinePowerModel::new(coef, intercept).unwrap()
    }

    fn series(cpus: &[f64], dt: f64) -> UtilizationSeries {
        UtilizationSeries {
            times: (0..cpus.len()).map(|i| i as f64 * dt).collect(),
            samples: cpus.iter().map(|&c| Utilization { cpu: c, ..Default::default() }).collect(),
        }
    }

    #[test]
    fn rectangle() {
        let m = cpu_model(0.0, 100.0);
        let acc = total_energy(&[series(&[0.5; 11], 1.0)], &m).unwrap();
        assert!((acc.joules_total - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn ramp_matches_triangle_area() {
        // Closed form: 0.5 * 10 s * 100 W.
        let m = cpu_model(100.0, 0.0);
        let cpus: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let acc = total_energy(&[series(&cpus, 1.0)], &m).unwrap();
        assert!((acc.joules_total - 500.0).abs() <= 500.0 * 1e-6);
    }

    #[test]
    fn dynamic_part_doubles_with_two_processes() {
        let m = cpu_model(80.0, 0.0);
        let s = series(&[0.2, 0.4, 0.3, 0.1], 0.5);
        let one = total_energy(std::slice::from_ref(&s), &m).unwrap();
        let two = total_energy(&[s.clone(), s], &m).unwrap();
        assert!((two.joules_total - 2.0 * one.joules_total).abs() < 1e-9);
    }

    #[test]
    fn intercept_not_duplicated() {
        let m = cpu_model(0.0, 30.0);
        let s = series(&[0.0; 3], 1.0);
        let two = total_energy(&[s.clone(), s], &m).unwrap();
        assert!((two.joules_total - 60.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let m = cpu_model(1.0, 0.0);
        let r = total_energy(&[series(&[0.1; 3], 1.0), series(&[0.1; 4], 1.0)], &m);
        assert_eq!(r, Err(DomainError::GridMismatch));
    }

    #[test]
    fn step_intervals_integrate_exactly() {
        let mut acc = EnergyAccount::default();
        acc.push_interval(0.0, 1.0, 50.0);
        acc.push_interval(1.0, 2.0, 70.0);
        acc.push_interval(2.0, 2.5, 10.0);
        assert!((acc.joules_total - 125.0).abs() < 1e-12);
        assert!((acc.integral() - acc.joules_total).abs() < 1e-12);
        acc.add_bytes(250.0);
        assert_eq!(acc.efficiency(), Some(2.0));
        assert_eq!(EnergyAccount::default().efficiency(), None);
    }
}
