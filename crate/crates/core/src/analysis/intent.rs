//! Which reported metrics a piece of text asks for.

use std::sync::LazyLock;

use regex::Regex;

const METRIC_KEYWORDS: &[(&str, &[&str])] = &[
    ("compensation", &["Trc", "Tlc"]),
    ("offsets?", &["Trc", "Tlc"]),
    ("trc", &["Trc"]),
    ("tlc", &["Tlc"]),
    ("tool length", &["Tlc"]),
    ("radius", &["Trc"]),
    ("drift", &["b", "w_d"]),
    ("wear", &["b", "w_d"]),
    ("variability", &["w_v"]),
    ("dispersion", &["w_v"]),
    ("residual", &["c"]),
    ("systematic", &["c"]),
    ("baseline", &["c"]),
    ("pathing", &["p"]),
    ("attribution", &["phi_p", "phi_c", "phi_d"]),
    ("fractions?", &["phi_p", "phi_c", "phi_d"]),
    ("predict(?:ed|ion)?", &["s_hat"]),
    ("average", &["mean"]),
    ("mean", &["mean"]),
    ("std", &["std"]),
    ("standard deviation", &["std"]),
    ("levels?", &["level"]),
    ("positions?", &["position"]),
    ("values", &["s"]),
];

static MATCHERS: LazyLock<Vec<(Regex, &'static [&'static str])>> = LazyLock::new(|| {
    METRIC_KEYWORDS
        .iter()
        .map(|(k, m)| (Regex::new(&format!(r"(?i)\b{k}\b")).unwrap(), *m))
        .collect()
});

/// Metrics requested by `text`, in table order without duplicates. A
/// specific offset ("tool length", "radius") overrides the generic
/// "offset" unless "compensation" is also mentioned.
pub fn requested_metrics(text: &str) -> Vec<String> {
    let text = crate::query::strip_hints(text);
    let hit = |i: usize| MATCHERS[i].0.is_match(&text);
    let specific = hit(4) || hit(5);
    let mut out: Vec<String> = Vec::new();
    for (i, (_, metrics)) in MATCHERS.iter().enumerate() {
        if !hit(i) || (i == 1 && specific && !hit(0)) {
            continue;
        }
        for m in *metrics {
            if !out.iter().any(|o| o == m) {
                out.push((*m).to_string());
            }
        }
    }
    out
}

/// Whether a reported metric name satisfies a requested one. Per-part values
/// are reported as `s@<part>`.
pub fn metric_satisfies(requested: &str, reported: &str) -> bool {
    requested == reported || (requested == "s" && reported.starts_with("s@"))
}
