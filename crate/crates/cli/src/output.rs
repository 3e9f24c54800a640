//! Deterministic serialization: JSON with every float written to 17
//! significant digits, and the sweep CSV.

use std::io;

use kcycle::SweepResult;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Pretty-printed JSON whose floats are written as `d.dddddddddddddddde±x`.
struct FixedFloats(PrettyFormatter<'static>);

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// `value` as JSON text with a trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("report types serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per accepted delta: `delta, x_1_1 .. x_k_n, max_distance_to_x0,
/// closure_residual, newton_iters`.
pub fn sweep_csv(result: &SweepResult, k: usize, n: usize) -> String {
    let mut header = vec!["delta".to_string()];
    for j in 1..=k {
        for i in 1..=n {
            header.push(format!("x_{j}_{i}"));
        }
    }
    header.extend(["max_distance_to_x0", "closure_residual", "newton_iters"].map(String::from));
    let mut out = header.join(",");
    out.push('\n');
    for r in &result.records {
        let mut row = vec![float(r.delta)];
        for p in r.cycle.points.points() {
            row.extend(p.iter().map(|&x| float(x)));
        }
        row.push(float(r.max_distance_to_x0));
        row.push(float(r.cycle.closure_residual));
        row.push(r.cycle.newton_iters.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
