use std::fmt::Write as _;

use crate::error::{invalid, Result};

/// Raw figures for a reservoir/readout deployment and the baseline it is
/// compared with. Latencies are in seconds, the bus clock in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FomInputs {
    pub m_rnn: f64,
    pub m_dlr: f64,
    pub c_rnn: f64,
    pub c_dlr: f64,
    pub delta_rnn: f64,
    pub delta_dlr: f64,
    pub q: u64,
    pub n: u64,
    pub b: u64,
    pub delta_d: f64,
    pub f_bus: f64,
    pub delta_rr: f64,
}

impl FomInputs {
    /// Reference figures for the 20-device emitter task: an LSTM baseline
    /// with 2.1M parameters and 6.5e13 training operations, a reservoir
    /// with Q = 20, N = 800, B = 8000, 26 µs per datapoint in the loop, a
    /// 256 MHz bus and 0.5 s of readout training. Baseline training latency
    /// is "more than 12 hours"; 12 h is used.
    pub fn reference() -> Self {
        let (q, n, b) = (20, 800, 8000);
        Self {
            m_rnn: 2.1e6,
            m_dlr: (q * n) as f64,
            c_rnn: 6.5e13,
            c_dlr: (b * n * n) as f64,
            delta_rnn: 12.0 * 3600.0,
            delta_dlr: 1.0,
            q,
            n,
            b,
            delta_d: 26e-6,
            f_bus: 256e6,
            delta_rr: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("m_rnn", self.m_rnn),
            ("m_dlr", self.m_dlr),
            ("c_rnn", self.c_rnn),
            ("c_dlr", self.c_dlr),
            ("delta_rnn", self.delta_rnn),
            ("delta_dlr", self.delta_dlr),
            ("delta_d", self.delta_d),
            ("f_bus", self.f_bus),
            ("delta_rr", self.delta_rr),
        ];
        for (name, v) in reals {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.q == 0 || self.n == 0 || self.b == 0 {
            return Err(invalid("q/n/b", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FomTable {
    pub inputs: FomInputs,
    /// Readout parameter count `Q N`.
    pub m_dlr: f64,
    /// Training complexity `B N^2`.
    pub c_dlr_train: f64,
    /// Inference complexity `Q N^2`.
    pub c_dlr_infer: f64,
    pub srf: f64,
    pub hcrf: f64,
    pub lrf: f64,
}

impl FomTable {
    pub fn to_text(&self) -> String {
        let i = &self.inputs;
        let mut s = String::new();
        let rows: [(&str, String); 18] = [
            ("q", i.q.to_string()),
            ("n", i.n.to_string()),
            ("b", i.b.to_string()),
            ("m_rnn", format!("{:e}", i.m_rnn)),
            ("m_dlr_input", format!("{:e}", i.m_dlr)),
            ("c_rnn", format!("{:e}", i.c_rnn)),
            ("c_dlr_input", format!("{:e}", i.c_dlr)),
            ("delta_rnn_s", format!("{:e}", i.delta_rnn)),
            ("delta_dlr_input_s", format!("{:e}", i.delta_dlr)),
            ("m_dlr", format!("{:e}", self.m_dlr)),
            ("c_dlr_train", format!("{:e}", self.c_dlr_train)),
            ("c_dlr_infer", format!("{:e}", self.c_dlr_infer)),
            ("srf", format!("{:.4}", self.srf)),
            ("hcrf", format!("{:.4}", self.hcrf)),
            ("lrf", format!("{:.4}", self.lrf)),
            ("delta_d_s", format!("{:e}", i.delta_d)),
            ("f_bus_hz", format!("{:e}", i.f_bus)),
            ("delta_rr_s", format!("{:e}", i.delta_rr)),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<14} {v}");
        }
        s
    }
}

/// `M = Q N`, `C_train = B N^2`, `C_infer = Q N^2`, and the three reduction
/// ratios computed from the supplied baseline and reservoir figures.
pub fn compute_foms(inputs: &FomInputs) -> Result<FomTable> {
    inputs.validate()?;
    let (q, n, b) = (inputs.q as f64, inputs.n as f64, inputs.b as f64);
    Ok(FomTable {
        inputs: *inputs,
        m_dlr: q * n,
        c_dlr_train: b * n * n,
        c_dlr_infer: q * n * n,
        srf: inputs.m_rnn / inputs.m_dlr,
        hcrf: inputs.c_rnn / inputs.c_dlr,
        lrf: inputs.delta_rnn / inputs.delta_dlr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyBreakdown {
    /// Time to collect the state matrix, `Δ_d B`.
    pub state_collection: f64,
    /// Plus reading the state memory twice over the bus, `2 M / f_bus`.
    pub memory_read: f64,
    pub loop_total: f64,
    /// Plus readout training.
    pub training_total: f64,
}

pub fn latency_model(inputs: &FomInputs) -> Result<LatencyBreakdown> {
    inputs.validate()?;
    let state_collection = inputs.delta_d * inputs.b as f64;
    let memory_read = 2.0 * inputs.m_dlr / inputs.f_bus;
    let loop_total = state_collection + memory_read;
    Ok(LatencyBreakdown {
        state_collection,
        memory_read,
        loop_total,
        training_total: loop_total + inputs.delta_rr,
    })
}
