use std::fmt::{self, Write as _};

use super::{ErrorReport, RESIDUAL_TOL};

/// Errors at or below this are too close to the solver tolerance for a rate.
pub const NOISE_FLOOR: f64 = 1e2 * RESIDUAL_TOL;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    /// First row, or the mesh size did not halve.
    Blank,
    /// One of the two errors is below [`NOISE_FLOOR`].
    Unreliable,
    Value(f64),
}

impl Order {
    pub fn value(self) -> Option<f64> {
        match self {
            Order::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Blank => Ok(()),
            Order::Unreliable => write!(f, "unreliable"),
            Order::Value(v) => write!(f, "{v:.2}"),
        }
    }
}

/// `log2(e_prev / e)` when `h` halved between the two rows.
pub fn observed_order(h_prev: f64, e_prev: f64, h: f64, e: f64) -> Order {
    if ((h_prev / h) - 2.0).abs() > 1e-6 {
        return Order::Blank;
    }
    if e_prev <= NOISE_FLOOR || e <= NOISE_FLOOR {
        return Order::Unreliable;
    }
    Order::Value((e_prev / e).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub errors: ErrorReport,
    /// Energy, L2 velocity, L2 pressure.
    pub orders: [Order; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub const CSV_HEADER: &'static str = "h,energy_err,energy_order,l2u_err,l2u_order,l2p_err,l2p_order";

    pub fn from_reports(reports: &[ErrorReport]) -> Self {
        let mut t = ConvergenceTable::default();
        for r in reports {
            t.push(*r);
        }
        t
    }

    pub fn push(&mut self, errors: ErrorReport) {
        let orders = match self.rows.last() {
            None => [Order::Blank; 3],
            Some(prev) => {
                let p = prev.errors;
                [
                    observed_order(p.h, p.energy, errors.h, errors.energy),
                    observed_order(p.h, p.l2_velocity, errors.h, errors.l2_velocity),
                    observed_order(p.h, p.l2_pressure, errors.h, errors.l2_pressure),
                ]
            }
        };
        self.rows.push(ConvergenceRow { errors, orders });
    }

    /// Orders of the last row.
    pub fn final_orders(&self) -> [Option<f64>; 3] {
        self.rows.last().map_or([None; 3], |r| r.orders.map(Order::value))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", Self::CSV_HEADER);
        for r in &self.rows {
            let e = r.errors;
            let _ = writeln!(
                s,
                "{:.6e},{:.4e},{},{:.4e},{},{:.4e},{}",
                e.h, e.energy, r.orders[0], e.l2_velocity, r.orders[1], e.l2_pressure, r.orders[2]
            );
        }
        s
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>10} {:>12} {:>6} {:>12} {:>6} {:>12} {:>6}",
            "h", "|||e_u|||", "order", "||e_u||", "order", "||e_p||", "order"
        )?;
        for r in &self.rows {
            let e = r.errors;
            let o = r.orders.map(|o| o.to_string());
            writeln!(
                f,
                "{:>10} {:>12.4e} {:>6} {:>12.4e} {:>6} {:>12.4e} {:>6}",
                format!("1/{:.0}", 1.0 / e.h),
                e.energy,
                o[0],
                e.l2_velocity,
                o[1],
                e.l2_pressure,
                o[2]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(h: f64, e: f64) -> ErrorReport {
        ErrorReport { h, energy: e, l2_velocity: e, l2_pressure: e }
    }

    #[test]
    fn halving_orders() {
        let o = observed_order(1.0 / 16.0, 0.32027, 1.0 / 32.0, 0.16542);
        assert!((o.value().unwrap() - 0.953).abs() < 5e-4);
        assert_eq!(observed_order(0.5, 4.0, 0.25, 1.0), Order::Value(2.0));
        assert_eq!(observed_order(0.5, 4.0, 0.3, 1.0), Order::Blank);
        assert_eq!(observed_order(0.5, 1e-9, 0.25, 9e-10), Order::Unreliable);
    }

    #[test]
    fn csv_layout() {
        let t = ConvergenceTable::from_reports(&[report(0.5, 4.0), report(0.25, 1.0)]);
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], ConvergenceTable::CSV_HEADER);
        assert_eq!(lines[1], "5.000000e-1,4.0000e0,,4.0000e0,,4.0000e0,");
        assert_eq!(lines[2], "2.500000e-1,1.0000e0,2.00,1.0000e0,2.00,1.0000e0,2.00");
        assert_eq!(t.final_orders(), [Some(2.0); 3]);
    }
}
