//! Descriptive statistics over a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use bovigeom_core::BcsLabel;

use crate::io::manifest::ManifestRow;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct YearHistogram {
    /// Distinct cows per class.
    pub cows: [usize; bovigeom_core::N_CLASSES],
    pub images: [usize; bovigeom_core::N_CLASSES],
}

/// Per-year BCS histograms; rows without a year are grouped under `None`.
pub fn bcs_histograms(rows: &[ManifestRow]) -> BTreeMap<Option<i32>, YearHistogram> {
    let mut out: BTreeMap<Option<i32>, YearHistogram> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in rows {
        let h = out.entry(r.year).or_default();
        let k = r.true_bcs.index();
        h.images[k] += 1;
        if seen.insert((r.year, r.cow_id.as_str())) {
            h.cows[k] += 1;
        }
    }
    out
}

/// Text rendering: one block per year, one row per BCS class.
pub fn render(hist: &BTreeMap<Option<i32>, YearHistogram>) -> String {
    let mut s = String::new();
    // Undated rows go last.
    let dated = hist.iter().filter(|(y, _)| y.is_some());
    for (year, h) in dated.chain(hist.iter().filter(|(y, _)| y.is_none())) {
        let year = year.map_or_else(|| "unknown".to_string(), |y| y.to_string());
        let peak = h.cows.iter().copied().max().unwrap_or(0).max(1);
        let _ = writeln!(s, "year {year}: {} cows, {} images", h.cows.iter().sum::<usize>(), h.images.iter().sum::<usize>());
        let _ = writeln!(s, "{:>5} {:>6} {:>7}", "bcs", "cows", "images");
        for l in BcsLabel::all() {
            let (c, i) = (h.cows[l.index()], h.images[l.index()]);
            let bar = "#".repeat((40 * c).div_ceil(peak));
            let _ = writeln!(s, "{:>5.2} {c:>6} {i:>7} {bar}", l.value());
        }
        s.push('\n');
    }
    s
}
