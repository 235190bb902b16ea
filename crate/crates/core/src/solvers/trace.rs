use std::io::{self, Write};

/// One recorded iteration. Loss and residual fields are summed over channels.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// `f(u^{k+1})`
    pub f_u: f64,
    /// `f(ũ^k)`
    pub f_utilde: f64,
    /// `‖P x^{k+1} − u^{k+1}‖`
    pub constraint_residual: f64,
    /// `‖Pᵀ u^{k+1} − G(w^{k+1}; z)‖`
    pub fit_residual: f64,
    pub elapsed_ms: f64,
    /// `‖Pᵀ[λ^k + ρ(P x^{k+1} − ũ^k)]‖`, ADMM family only.
    pub optimality_residual: Option<f64>,
    /// `max |u^{k+1} − (ũ^k − ∇f(ũ^k))|`, when diagnostics are on.
    pub cross_path_diff: Option<f64>,
    /// `max |ũ^{k+1} − λ^{k+1}/ρ|` outside the image support.
    pub fill_rule_dev: Option<f64>,
}

impl TraceRow {
    pub(crate) fn new(iter: usize) -> Self {
        Self {
            iter,
            f_u: f64::NAN,
            f_utilde: f64::NAN,
            constraint_residual: 0.0,
            fit_residual: 0.0,
            elapsed_ms: 0.0,
            optimality_residual: None,
            cross_path_diff: None,
            fill_rule_dev: None,
        }
    }

    /// Same row with the wall-clock column cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            elapsed_ms: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    /// Norm of the imaginary part discarded when forming `ũ⁰ = Re F⁻¹(b)`.
    pub initial_imag_norm: f64,
}

pub const TRACE_CSV_HEADER: &str = "iter,f_u,f_utilde,constraint_residual,fit_residual,elapsed_ms";

impl SolverTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for row in &self.rows {
            write_row(&mut out, row)?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

pub fn write_row<W: Write>(out: &mut W, row: &TraceRow) -> io::Result<()> {
    writeln!(
        out,
        "{},{:e},{:e},{:e},{:e},{:.3}",
        row.iter, row.f_u, row.f_utilde, row.constraint_residual, row.fit_residual, row.elapsed_ms
    )
}

/// Appends trace rows to a CSV stream as they are produced.
pub struct CsvTraceSink<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> CsvTraceSink<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            header_written: false,
        }
    }

    pub fn push(&mut self, row: &TraceRow) -> io::Result<()> {
        if !self.header_written {
            writeln!(self.out, "{TRACE_CSV_HEADER}")?;
            self.header_written = true;
        }
        write_row(&mut self.out, row)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
