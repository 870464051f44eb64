//! Output formats, registered by name and chosen at runtime.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{AnalysisReport, ComparisonReport, KernelDiff, OptimizationReport, Report};
use crate::error::{Error, Result};
use crate::optimizer::SweepResult;

pub trait ReportWriter: Send + Sync {
    fn name(&self) -> &'static str;

    fn render(&self, report: &Report) -> Result<String>;
}

/// Name-indexed set of [`ReportWriter`]s.
pub struct FormatRegistry {
    writers: BTreeMap<&'static str, Box<dyn ReportWriter>>,
}

impl FormatRegistry {
    pub fn empty() -> Self {
        Self { writers: BTreeMap::new() }
    }

    /// `text`, `csv` and `json`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(TextWriter));
        r.register(Box::new(CsvWriter));
        r.register(Box::new(JsonWriter));
        r
    }

    pub fn register(&mut self, writer: Box<dyn ReportWriter>) {
        self.writers.insert(writer.name(), writer);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ReportWriter> {
        self.writers.get(name).map(Box::as_ref).ok_or_else(|| Error::UnknownName {
            what: "format",
            name: name.to_string(),
            valid: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.writers.keys().copied().collect()
    }
}

impl Default for FormatRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Renders `report` with the named format from the built-in registry.
pub fn emit_report(report: &Report, format: &str) -> Result<String> {
    FormatRegistry::builtin().get(format)?.render(report)
}

/// Formats `x` with six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = trim(format!("{x:.decimals$}"));
        // Rounding can carry into a new digit (e.g. 999999.5).
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 6 {
            return sig6_exp(x);
        }
        s
    } else {
        sig6_exp(x)
    }
}

fn sig6_exp(x: f64) -> String {
    let s = format!("{x:.5e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    format!("{mantissa}e{exp}")
}

fn millions(n: u64) -> String {
    sig6(n as f64 / 1e6)
}

fn opt_percent(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".into(), |v| format!("{}%", sig6(v)))
}

pub struct TextWriter;

impl TextWriter {
    fn analysis(r: &AnalysisReport) -> String {
        let mut s = String::new();
        writeln!(s, "network: {}", r.spec_name).unwrap();
        writeln!(
            s,
            "{:<16} {:<15} {:>4} {:>3} {:>15} {:>15} {:>6} {:>5} {:>14} {:>11}",
            "layer", "kind", "k", "s", "input", "output", "rf", "jump", "macs", "params"
        )
        .unwrap();
        for l in &r.layers {
            let dims = |f: crate::arch::FeatureShape| format!("{}x{}x{}", f.height, f.width, f.channels);
            writeln!(
                s,
                "{:<16} {:<15} {:>4} {:>3} {:>15} {:>15} {:>6} {:>5} {:>14} {:>11}",
                l.layer_id,
                l.kind.as_str(),
                l.kernel.to_string(),
                l.stride,
                dims(l.input),
                dims(l.output),
                l.receptive_field,
                l.jump,
                l.macs,
                l.params
            )
            .unwrap();
        }
        writeln!(s, "total MACs (FLOPs): {} ({} M)", r.total_macs, millions(r.total_macs)).unwrap();
        writeln!(s, "total params: {} ({} M)", r.total_params, millions(r.total_params)).unwrap();
        writeln!(
            s,
            "model size: {} bytes ({} MB at {} bytes/weight)",
            r.model_size_bytes,
            millions(r.model_size_bytes),
            r.bytes_per_weight
        )
        .unwrap();
        writeln!(s, "final receptive field: {}", r.final_receptive_field).unwrap();
        s
    }

    fn optimization(r: &OptimizationReport) -> String {
        let mut s = String::new();
        let [l1, l2, l3] = r.weights.as_array();
        writeln!(s, "network: {}", r.spec_name).unwrap();
        writeln!(
            s,
            "weights: lambda1={} lambda2={} lambda3={}  gamma={}",
            sig6(l1),
            sig6(l2),
            sig6(l3),
            sig6(r.gamma.value())
        )
        .unwrap();
        writeln!(s, "candidates: {}  accuracy model: {}", r.candidates, r.accuracy_model).unwrap();
        writeln!(
            s,
            "budget MACs: {}  rf floor: {}",
            r.budget_macs.map_or_else(|| "none".into(), |b| b.to_string()),
            r.rf_floor.map_or_else(|| "none".into(), |f| f.to_string())
        )
        .unwrap();

        for table in &r.result.decisions {
            writeln!(s).unwrap();
            writeln!(s, "layer {}", table.layer_id).unwrap();
            writeln!(
                s,
                "  {:>4} {:>11} {:>11} {:>13} {:>11} {:>11} {:>11} {:>11}",
                "k", "raw_I", "raw_A", "raw_C", "norm_I", "norm_A", "norm_C", "score"
            )
            .unwrap();
            for row in &table.rows {
                let mark = if row.k == table.chosen_k { '*' } else { ' ' };
                writeln!(
                    s,
                    "{mark} {:>4} {:>11} {:>11} {:>13} {:>11} {:>11} {:>11} {:>11}",
                    row.k,
                    sig6(row.raw_i),
                    sig6(row.raw_a),
                    sig6(row.raw_c),
                    sig6(row.norm_i),
                    sig6(row.norm_a),
                    sig6(row.norm_c),
                    sig6(row.score)
                )
                .unwrap();
            }
            writeln!(s, "  chosen k = {}", table.chosen_k).unwrap();
        }

        let res = &r.result;
        if !res.repair_log.is_empty() {
            writeln!(s).unwrap();
            writeln!(s, "budget repair:").unwrap();
            for step in &res.repair_log {
                writeln!(
                    s,
                    "  {}: {} -> {}  score loss {}  MACs saved {}",
                    step.layer_id,
                    step.from_k,
                    step.to_k,
                    sig6(step.score_loss),
                    step.macs_saved
                )
                .unwrap();
            }
        }
        writeln!(s).unwrap();
        let final_kernels: Vec<String> = res
            .optimized_spec
            .layers
            .iter()
            .map(|l| format!("{}={}", l.id, l.kernel))
            .collect();
        writeln!(s, "kernels: {}", final_kernels.join(" ")).unwrap();
        writeln!(
            s,
            "total MACs: {} before repair, {} after ({} M)",
            res.total_macs_before_repair,
            res.total_macs_after_repair,
            millions(res.total_macs_after_repair)
        )
        .unwrap();
        writeln!(s, "final receptive field: {}", res.final_receptive_field).unwrap();
        s
    }

    fn comparison(r: &ComparisonReport) -> String {
        let mut s = String::new();
        writeln!(s, "a: {}", r.name_a).unwrap();
        writeln!(s, "b: {}", r.name_b).unwrap();
        writeln!(s, "{:<22} {:>16} {:>16} {:>12}", "metric", "a", "b", "delta").unwrap();
        let rows = [
            ("MACs (FLOPs)", r.macs_a, r.macs_b, opt_percent(r.mac_delta_percent)),
            ("params", r.params_a, r.params_b, opt_percent(r.param_delta_percent)),
            ("model size bytes", r.model_size_bytes_a, r.model_size_bytes_b, opt_percent(r.model_size_delta_percent)),
            (
                "final receptive field",
                r.receptive_field_a,
                r.receptive_field_b,
                opt_percent(super::delta_percent(r.receptive_field_a, r.receptive_field_b)),
            ),
        ];
        for (name, a, b, d) in rows {
            writeln!(s, "{name:<22} {a:>16} {b:>16} {d:>12}").unwrap();
        }
        let changed: Vec<&KernelDiff> = r.kernel_diff.iter().filter(|d| d.changed).collect();
        writeln!(s, "layer changes: {}", changed.len()).unwrap();
        for d in changed {
            let side = |b: &Option<super::LayerBrief>| {
                b.as_ref().map_or_else(|| "-".into(), |b| format!("{} {} k={}", b.id, b.kind, b.kernel))
            };
            writeln!(s, "  [{}] {} -> {}", d.index, side(&d.a), side(&d.b)).unwrap();
        }
        s
    }

    fn sweep(r: &SweepResult) -> String {
        let mut s = String::new();
        writeln!(s, "network: {}  grid points: {}", r.spec_name, r.rows.len()).unwrap();
        write!(s, "{:>9} {:>9} {:>9} {:>9}", "lambda1", "lambda2", "lambda3", "gamma").unwrap();
        for id in &r.layer_ids {
            write!(s, " {id:>8}").unwrap();
        }
        writeln!(s, " {:>14} {:>11}", "macs", "params").unwrap();
        for row in &r.rows {
            write!(s, "{:>9} {:>9} {:>9} {:>9}", sig6(row.lambda1), sig6(row.lambda2), sig6(row.lambda3), sig6(row.gamma))
                .unwrap();
            match &row.error {
                Some(e) => writeln!(s, " error: {e}").unwrap(),
                None => {
                    for k in &row.kernels {
                        write!(s, " {k:>8}").unwrap();
                    }
                    writeln!(s, " {:>14} {:>11}", row.total_macs.unwrap_or(0), row.total_params.unwrap_or(0)).unwrap();
                }
            }
        }
        s
    }
}

impl ReportWriter for TextWriter {
    fn name(&self) -> &'static str {
        "text"
    }

    fn render(&self, report: &Report) -> Result<String> {
        Ok(match report {
            Report::Analysis(r) => Self::analysis(r),
            Report::Optimization(r) => Self::optimization(r),
            Report::Comparison(r) => Self::comparison(r),
            Report::Sweep(r) => Self::sweep(r),
        })
    }
}

pub struct CsvWriter;

fn opt_string<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl CsvWriter {
    fn write(records: Vec<Vec<String>>) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        for rec in records {
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl ReportWriter for CsvWriter {
    fn name(&self) -> &'static str {
        "csv"
    }

    fn render(&self, report: &Report) -> Result<String> {
        let mut records = Vec::new();
        match report {
            Report::Analysis(r) => {
                records.push(strings([
                    "layer_id", "kind", "kernel", "stride", "in_h", "in_w", "in_c", "out_h", "out_w", "out_c",
                    "receptive_field", "jump", "macs", "params",
                ]));
                for l in &r.layers {
                    records.push(vec![
                        l.layer_id.clone(),
                        l.kind.to_string(),
                        l.kernel.to_string(),
                        l.stride.to_string(),
                        l.input.height.to_string(),
                        l.input.width.to_string(),
                        l.input.channels.to_string(),
                        l.output.height.to_string(),
                        l.output.width.to_string(),
                        l.output.channels.to_string(),
                        l.receptive_field.to_string(),
                        l.jump.to_string(),
                        l.macs.to_string(),
                        l.params.to_string(),
                    ]);
                }
            }
            Report::Optimization(r) => {
                records.push(strings([
                    "layer_id", "k", "raw_i", "raw_a", "raw_c", "norm_i", "norm_a", "norm_c", "score", "chosen",
                    "lambda1", "lambda2", "lambda3", "gamma",
                ]));
                let [l1, l2, l3] = r.weights.as_array();
                for t in &r.result.decisions {
                    for row in &t.rows {
                        records.push(vec![
                            t.layer_id.clone(),
                            row.k.to_string(),
                            row.raw_i.to_string(),
                            row.raw_a.to_string(),
                            row.raw_c.to_string(),
                            row.norm_i.to_string(),
                            row.norm_a.to_string(),
                            row.norm_c.to_string(),
                            row.score.to_string(),
                            u8::from(row.k == t.chosen_k).to_string(),
                            l1.to_string(),
                            l2.to_string(),
                            l3.to_string(),
                            r.gamma.value().to_string(),
                        ]);
                    }
                }
            }
            Report::Comparison(r) => {
                records.push(strings(["section", "key", "a", "b", "delta_percent"]));
                let totals = [
                    ("total_macs", r.macs_a, r.macs_b, r.mac_delta_percent),
                    ("total_params", r.params_a, r.params_b, r.param_delta_percent),
                    ("model_size_bytes", r.model_size_bytes_a, r.model_size_bytes_b, r.model_size_delta_percent),
                    (
                        "final_receptive_field",
                        r.receptive_field_a,
                        r.receptive_field_b,
                        super::delta_percent(r.receptive_field_a, r.receptive_field_b),
                    ),
                ];
                for (key, a, b, d) in totals {
                    records.push(vec!["total".into(), key.into(), a.to_string(), b.to_string(), opt_string(d)]);
                }
                for d in &r.kernel_diff {
                    let side = |b: &Option<super::LayerBrief>| {
                        b.as_ref().map_or_else(String::new, |b| format!("{}:{}:{}", b.id, b.kind, b.kernel))
                    };
                    records.push(vec!["layer".into(), d.index.to_string(), side(&d.a), side(&d.b), String::new()]);
                }
            }
            Report::Sweep(r) => {
                let mut header = strings(["lambda1", "lambda2", "lambda3", "gamma"]);
                header.extend(r.layer_ids.iter().cloned());
                header.extend(strings(["total_macs", "total_params", "error"]));
                records.push(header);
                for row in &r.rows {
                    let mut rec =
                        vec![row.lambda1.to_string(), row.lambda2.to_string(), row.lambda3.to_string(), row.gamma.to_string()];
                    if row.kernels.len() == r.layer_ids.len() {
                        rec.extend(row.kernels.iter().map(ToString::to_string));
                    } else {
                        rec.extend(r.layer_ids.iter().map(|_| String::new()));
                    }
                    rec.push(opt_string(row.total_macs));
                    rec.push(opt_string(row.total_params));
                    rec.push(row.error.clone().unwrap_or_default());
                    records.push(rec);
                }
            }
        }
        Self::write(records)
    }
}

/// Structured output; parses back into an identical [`Report`].
pub struct JsonWriter;

impl ReportWriter for JsonWriter {
    fn name(&self) -> &'static str {
        "json"
    }

    fn render(&self, report: &Report) -> Result<String> {
        let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Parses [`JsonWriter`] output.
pub fn parse_json_report(text: &str) -> Result<Report> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{InputShape, Kernel, LayerSpec, NetworkSpec, OpKind};
    use crate::objective::{Gamma, KernelCandidates, ObjectiveWeights};
    use crate::optimizer::{optimize_network, OptimizationConfig};
    use crate::report::OptimizationReport;

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(std::f64::consts::LN_2), "0.693147");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(-0.25), "-0.25");
        assert_eq!(sig6(37_748_736.0), "3.77487e7");
        assert_eq!(sig6(123_456.4), "123456");
        assert_eq!(sig6(999_999.7), "1e6");
        assert_eq!(sig6(1.5e-7), "1.5e-7");
    }

    fn report() -> Report {
        let spec = NetworkSpec {
            name: "r".into(),
            input: InputShape { height: 16, width: 16, channels: 3 },
            layers: vec![LayerSpec::new("c1", OpKind::StandardConv, 3, 8, Kernel::Free, 1)],
        };
        let config = OptimizationConfig::new(KernelCandidates::default(), ObjectiveWeights::balanced(), Gamma::default());
        let result = optimize_network(&spec, &config).unwrap();
        Report::Optimization(OptimizationReport::new(&spec.name, &config, result))
    }

    #[test]
    fn text_table_marks_chosen_row() {
        let text = emit_report(&report(), "text").unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("* ") || l.starts_with("  ") && l.trim_start().starts_with(char::is_numeric)).collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.iter().filter(|l| l.starts_with('*')).count(), 1);
        assert!(text.contains("lambda1=0.333333"));
        assert!(text.contains("gamma=0.5"));
        assert!(text.contains("candidates: 1,3,5,7,9"));
    }

    #[test]
    fn deterministic_and_roundtrippable() {
        let r = report();
        for f in ["text", "csv", "json"] {
            assert_eq!(emit_report(&r, f).unwrap(), emit_report(&r, f).unwrap());
        }
        let back = parse_json_report(&emit_report(&r, "json").unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_rows_echo_weights() {
        let csv = emit_report(&report(), "csv").unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("layer_id,k,raw_i"));
        let fields: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
        assert_eq!(fields.iter().filter(|f| f[9] == "1").count(), 1);
        assert!(fields.iter().all(|f| f[10] == "0.3333333333333333" && f[13] == "0.5"));
    }

    #[test]
    fn unknown_format() {
        let err = emit_report(&report(), "xml").unwrap_err().to_string();
        assert!(err.contains("csv, json, text"), "{err}");
    }
}
