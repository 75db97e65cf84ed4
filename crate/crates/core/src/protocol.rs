//! Domain types shared by the simulator, the analytic models and the
//! finite-key analyzer: protocol parameters, phase slicing, sifting and the
//! click tally.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intensity setting chosen by one side in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Signal,
    Weak,
    Vacuum,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::Signal, Setting::Weak, Setting::Vacuum];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Signal => "signal",
            Setting::Weak => "weak",
            Setting::Vacuum => "vacuum",
        }
    }
}

/// Total (two-sided) intensities; each side sends half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensities {
    pub signal: f64,
    pub weak: f64,
    #[serde(default)]
    pub vacuum: f64,
}

impl Intensities {
    pub fn total(&self, setting: Setting) -> f64 {
        match setting {
            Setting::Signal => self.signal,
            Setting::Weak => self.weak,
            Setting::Vacuum => self.vacuum,
        }
    }

    pub fn per_side(&self, setting: Setting) -> f64 {
        self.total(setting) / 2.0
    }
}

/// Per-side probabilities of picking each setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingRatios {
    pub signal: f64,
    pub weak: f64,
    pub vacuum: f64,
}

impl SettingRatios {
    pub fn get(&self, setting: Setting) -> f64 {
        match setting {
            Setting::Signal => self.signal,
            Setting::Weak => self.weak,
            Setting::Vacuum => self.vacuum,
        }
    }
}

/// Merged phase groups kept for key generation, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GroupSet(Vec<usize>);

impl GroupSet {
    pub fn new(mut groups: Vec<usize>) -> Self {
        groups.sort_unstable();
        groups.dedup();
        GroupSet(groups)
    }

    pub fn matched() -> Self {
        GroupSet(vec![0])
    }

    pub fn all(slices: usize) -> Self {
        GroupSet((0..slices / 2).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, group: usize) -> bool {
        self.0.binary_search(&group).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl TryFrom<Vec<usize>> for GroupSet {
    type Error = std::convert::Infallible;

    fn try_from(v: Vec<usize>) -> std::result::Result<Self, Self::Error> {
        Ok(GroupSet::new(v))
    }
}

impl From<GroupSet> for Vec<usize> {
    fn from(g: GroupSet) -> Self {
        g.0
    }
}

fn default_slices() -> usize {
    16
}

fn default_group_set() -> GroupSet {
    GroupSet::matched()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of phase slices `D`.
    #[serde(default = "default_slices")]
    pub slices: usize,
    pub intensities: Intensities,
    pub ratios: SettingRatios,
    /// Number of quantum rounds `N`.
    pub rounds: u64,
    pub f_ec: f64,
    pub n_alpha: f64,
    #[serde(default = "default_group_set")]
    pub group_set: GroupSet,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        let d = self.slices;
        if d < 4 || d % 4 != 0 {
            return Err(Error::invalid(format!(
                "slice count D = {d} must be a multiple of 4 and at least 4"
            )));
        }
        let r = &self.ratios;
        for (name, v) in [("signal", r.signal), ("weak", r.weak), ("vacuum", r.vacuum)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("ratio {name} = {v} outside [0, 1]")));
            }
        }
        let sum = r.signal + r.weak + r.vacuum;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("setting ratios sum to {sum}, not 1")));
        }
        let i = &self.intensities;
        if !(i.vacuum >= 0.0 && i.vacuum < i.weak && i.weak < i.signal && i.signal.is_finite()) {
            return Err(Error::InvalidIntensity(format!(
                "need 0 <= vacuum < weak < signal, got {} / {} / {}",
                i.vacuum, i.weak, i.signal
            )));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("round count must be positive"));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::invalid(format!("f_ec = {} must be >= 1", self.f_ec)));
        }
        if !(self.n_alpha > 0.0) {
            return Err(Error::invalid(format!("n_alpha = {} must be positive", self.n_alpha)));
        }
        if let Some(g) = self.group_set.iter().find(|&g| g >= d / 2) {
            return Err(Error::invalid(format!("group {g} outside 0..{}", d / 2)));
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.slices / 2
    }
}

/// Result of a detection window at the measurement site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionOutcome {
    None,
    Left,
    Right,
    Both,
}

/// A successful detection: exactly one detector fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Click {
    Left,
    Right,
}

impl DetectionOutcome {
    pub fn from_clicks(left: bool, right: bool) -> Self {
        match (left, right) {
            (false, false) => DetectionOutcome::None,
            (true, false) => DetectionOutcome::Left,
            (false, true) => DetectionOutcome::Right,
            (true, true) => DetectionOutcome::Both,
        }
    }

    pub fn single_click(self) -> Option<Click> {
        match self {
            DetectionOutcome::Left => Some(Click::Left),
            DetectionOutcome::Right => Some(Click::Right),
            _ => None,
        }
    }
}

/// One quantum round as seen by Alice, Bob and the announced outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub setting_a: Setting,
    pub setting_b: Setting,
    pub slice_a: usize,
    pub slice_b: usize,
    pub key_a: bool,
    pub key_b: bool,
    pub outcome: DetectionOutcome,
}

impl RoundRecord {
    pub fn validate(&self, slices: usize) -> Result<()> {
        if self.slice_a >= slices || self.slice_b >= slices {
            return Err(Error::invalid(format!(
                "slice indices ({}, {}) must be below D = {slices}",
                self.slice_a, self.slice_b
            )));
        }
        Ok(())
    }

    /// Sifts the round against a phase-reference slice. Returns `None` when
    /// the round is not a successful detection.
    pub fn sift(&self, slice_delta: usize, slices: usize) -> Result<Option<SiftedRound>> {
        self.validate(slices)?;
        let Some(click) = self.outcome.single_click() else {
            return Ok(None);
        };
        let s = sift(self.slice_a, self.slice_b, slice_delta, click, slices)?;
        let key_b = self.key_b ^ s.flip_b;
        Ok(Some(SiftedRound {
            group: s.group,
            error: self.key_a != key_b,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiftedRound {
    pub group: usize,
    pub error: bool,
}

/// Index of the slice `[π(2j−1)/D, π(2j+1)/D)` containing `phi`.
pub fn slice_of_phase(phi: f64, slices: usize) -> Result<usize> {
    if !phi.is_finite() {
        return Err(Error::invalid(format!("phase {phi} is not finite")));
    }
    if slices == 0 {
        return Err(Error::invalid("slice count must be positive"));
    }
    let reduced = phi.rem_euclid(TAU);
    let d = slices as f64;
    // reduced·D/π lands on odd integers at slice boundaries
    let mut j = ((reduced * d / PI + 1.0) / 2.0).floor() as usize;
    // settle rounding at the boundaries against their direct evaluation
    let lower_edge = |j: usize| PI / d * (2.0 * j as f64 - 1.0);
    if reduced >= lower_edge(j + 1) {
        j += 1;
    } else if j > 0 && reduced < lower_edge(j) {
        j -= 1;
    }
    Ok(j % slices)
}

/// Center phase of slice `j`.
pub fn slice_center(j: usize, slices: usize) -> f64 {
    TAU * j as f64 / slices as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sift {
    pub group: usize,
    pub flip_b: bool,
}

/// Sifting rule: `j_s = (j_a − j_b + j_δ) mod D`, Bob flips on an `R` click
/// and again when `j_s ∈ [D/4, 3D/4)`, then `j_s` merges with `j_s + D/2`.
pub fn sift(slice_a: usize, slice_b: usize, slice_delta: usize, click: Click, slices: usize) -> Result<Sift> {
    if slices < 4 || slices % 4 != 0 {
        return Err(Error::invalid(format!("slice count {slices} must be a multiple of 4")));
    }
    if slice_a >= slices || slice_b >= slices || slice_delta >= slices {
        return Err(Error::invalid(format!(
            "slice indices ({slice_a}, {slice_b}, {slice_delta}) must be below {slices}"
        )));
    }
    let raw = (slice_a + slices - slice_b + slice_delta) % slices;
    let opposite = (slices / 4..3 * slices / 4).contains(&raw);
    Ok(Sift {
        group: raw % (slices / 2),
        flip_b: (click == Click::Right) ^ opposite,
    })
}

/// Binary entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("binary entropy argument {x} outside [0, 1]")));
    }
    Ok(binary_entropy_unchecked(x))
}

pub(crate) fn binary_entropy_unchecked(x: f64) -> f64 {
    const GUARD: f64 = 1e-15;
    if x < GUARD || 1.0 - x < GUARD {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Clicks and bit errors within one merged phase group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTally {
    pub clicks: u64,
    pub errors: u64,
}

/// Sends, single clicks and per-group counts for one joint setting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTally {
    pub sent: u64,
    pub clicks: u64,
    pub groups: Vec<GroupTally>,
}

impl StateTally {
    pub fn with_groups(groups: usize) -> Self {
        StateTally {
            sent: 0,
            clicks: 0,
            groups: vec![GroupTally::default(); groups],
        }
    }

    pub fn group(&self, j: usize) -> Option<&GroupTally> {
        self.groups.get(j)
    }

    fn merge(&mut self, other: &StateTally) {
        self.sent += other.sent;
        self.clicks += other.clicks;
        if self.groups.len() < other.groups.len() {
            self.groups.resize(other.groups.len(), GroupTally::default());
        }
        for (g, o) in self.groups.iter_mut().zip(&other.groups) {
            g.clicks += o.clicks;
            g.errors += o.errors;
        }
    }
}

/// Counts indexed by joint setting and merged phase group. Rounds where Alice
/// and Bob picked different settings only count in `mixed_sends`.
///
/// `groups` may list fewer than `D/2` entries when only some groups were
/// published; the per-group sum then only has to stay below the total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyTable {
    pub slices: usize,
    pub rounds: u64,
    pub mixed_sends: u64,
    pub signal: StateTally,
    pub weak: StateTally,
    pub vacuum: StateTally,
}

impl TallyTable {
    pub fn new(slices: usize) -> Self {
        let g = slices / 2;
        TallyTable {
            slices,
            rounds: 0,
            mixed_sends: 0,
            signal: StateTally::with_groups(g),
            weak: StateTally::with_groups(g),
            vacuum: StateTally::with_groups(g),
        }
    }

    pub fn state(&self, setting: Setting) -> &StateTally {
        match setting {
            Setting::Signal => &self.signal,
            Setting::Weak => &self.weak,
            Setting::Vacuum => &self.vacuum,
        }
    }

    pub fn state_mut(&mut self, setting: Setting) -> &mut StateTally {
        match setting {
            Setting::Signal => &mut self.signal,
            Setting::Weak => &mut self.weak,
            Setting::Vacuum => &mut self.vacuum,
        }
    }

    /// Number of merged groups with published counts.
    pub fn covered_groups(&self) -> usize {
        Setting::ALL
            .iter()
            .map(|&s| self.state(s).groups.len())
            .min()
            .unwrap_or(0)
    }

    pub fn is_complete(&self) -> bool {
        self.covered_groups() == self.slices / 2
    }

    /// Field-wise sum; both tables must use the same slice count.
    pub fn merge(&self, other: &TallyTable) -> Result<TallyTable> {
        let mut out = self.clone();
        out.merge_in(other)?;
        Ok(out)
    }

    pub fn merge_in(&mut self, other: &TallyTable) -> Result<()> {
        if self.slices != other.slices {
            return Err(Error::invalid(format!(
                "cannot merge tallies with D = {} and D = {}",
                self.slices, other.slices
            )));
        }
        self.rounds += other.rounds;
        self.mixed_sends += other.mixed_sends;
        for s in Setting::ALL {
            self.state_mut(s).merge(other.state(s));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.slices < 4 || self.slices % 4 != 0 {
            return Err(Error::dataset("tally.slices", format!("{} is not a positive multiple of 4", self.slices)));
        }
        let half = self.slices / 2;
        let mut sent = self.mixed_sends;
        for s in Setting::ALL {
            let st = self.state(s);
            let name = s.name();
            if st.groups.len() > half {
                return Err(Error::dataset(
                    format!("tally.{name}.groups"),
                    format!("{} groups listed, at most D/2 = {half}", st.groups.len()),
                ));
            }
            if st.clicks > st.sent {
                return Err(Error::dataset(
                    format!("tally.{name}.clicks"),
                    format!("{} clicks exceed {} sends", st.clicks, st.sent),
                ));
            }
            for (j, g) in st.groups.iter().enumerate() {
                if g.errors > g.clicks {
                    return Err(Error::dataset(
                        format!("tally.{name}.groups[{j}]"),
                        format!("erroneous {} exceeds received {} in group {j}", g.errors, g.clicks),
                    ));
                }
            }
            let group_sum: u64 = st.groups.iter().map(|g| g.clicks).sum();
            if st.groups.len() == half && group_sum != st.clicks {
                return Err(Error::dataset(
                    format!("tally.{name}.groups"),
                    format!("group clicks sum to {group_sum}, total is {}", st.clicks),
                ));
            }
            if group_sum > st.clicks {
                return Err(Error::dataset(
                    format!("tally.{name}.groups"),
                    format!("group clicks sum to {group_sum}, exceeding total {}", st.clicks),
                ));
            }
            sent += st.sent;
        }
        if sent != self.rounds {
            return Err(Error::dataset(
                "tally.rounds",
                format!("sends add up to {sent}, rounds is {}", self.rounds),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn slice_examples() {
        assert_eq!(slice_of_phase(0.0, 16).unwrap(), 0);
        assert_eq!(slice_of_phase(PI, 16).unwrap(), 8);
        assert_eq!(slice_of_phase(0.2, 16).unwrap(), 1);
        assert_eq!(slice_of_phase(-0.1, 16).unwrap(), 0);
        assert!(slice_of_phase(f64::NAN, 16).is_err());
        assert!(slice_of_phase(f64::INFINITY, 16).is_err());
    }

    #[test]
    fn slice_boundary_is_right_open() {
        // π/D·(2j+1) opens slice j+1
        let d = 8;
        let b = PI / d as f64 * 3.0;
        assert_eq!(slice_of_phase(b, d).unwrap(), 2);
        assert_eq!(slice_of_phase(b - 1e-12, d).unwrap(), 1);
        // last boundary wraps to 0
        assert_eq!(slice_of_phase(PI / d as f64 * 15.0, d).unwrap(), 0);
        assert_eq!(slice_of_phase(TAU - 1e-12, d).unwrap(), 0);
    }

    #[test]
    fn sift_examples() {
        assert_eq!(sift(5, 3, 14, Click::Left, 16).unwrap(), Sift { group: 0, flip_b: false });
        assert_eq!(sift(0, 8, 0, Click::Left, 16).unwrap(), Sift { group: 0, flip_b: true });
        assert_eq!(sift(1, 0, 0, Click::Right, 16).unwrap(), Sift { group: 1, flip_b: true });
        assert!(sift(16, 0, 0, Click::Left, 16).is_err());
        assert!(sift(0, 0, 0, Click::Left, 6).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.49991).abs() < 1e-5);
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn round_record_sifting() {
        let r = RoundRecord {
            setting_a: Setting::Signal,
            setting_b: Setting::Signal,
            slice_a: 3,
            slice_b: 3,
            key_a: true,
            key_b: true,
            outcome: DetectionOutcome::Left,
        };
        assert_eq!(r.sift(0, 16).unwrap(), Some(SiftedRound { group: 0, error: false }));
        let both = RoundRecord { outcome: DetectionOutcome::Both, ..r };
        assert_eq!(both.sift(0, 16).unwrap(), None);
        let bad = RoundRecord { slice_a: 16, ..r };
        assert!(bad.sift(0, 16).is_err());
    }

    fn params() -> ProtocolParams {
        ProtocolParams {
            slices: 16,
            intensities: Intensities { signal: 0.2, weak: 0.1, vacuum: 0.0 },
            ratios: SettingRatios { signal: 0.5, weak: 0.25, vacuum: 0.25 },
            rounds: 1_000_000,
            f_ec: 1.1,
            n_alpha: 7.0,
            group_set: GroupSet::matched(),
        }
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.slices = 6;
        assert!(p.validate().is_err());
        let mut p = params();
        p.ratios.vacuum = 0.3;
        assert!(p.validate().is_err());
        let mut p = params();
        p.intensities.weak = 0.2;
        assert!(matches!(p.validate(), Err(Error::InvalidIntensity(_))));
        let mut p = params();
        p.group_set = GroupSet::new(vec![0, 8]);
        assert!(p.validate().is_err());
        let mut p = params();
        p.f_ec = 0.9;
        assert!(p.validate().is_err());
    }

    #[test]
    fn tally_validation_names_group() {
        let mut t = TallyTable::new(16);
        t.rounds = 10;
        t.signal.sent = 10;
        t.signal.clicks = 5;
        t.signal.groups[1] = GroupTally { clicks: 5, errors: 6 };
        let err = t.validate().unwrap_err().to_string();
        assert!(err.contains("groups[1]"), "{err}");
        t.signal.groups[1].errors = 1;
        t.validate().unwrap();
        t.signal.groups[1].clicks = 4;
        assert!(t.validate().is_err());
    }

    fn arb_tally() -> impl Strategy<Value = TallyTable> {
        let state = (0u64..1000, prop::collection::vec((0u64..100, 0u64..100), 4)).prop_map(|(extra, gs)| {
            let groups: Vec<GroupTally> = gs
                .into_iter()
                .map(|(c, e)| GroupTally { clicks: c.max(e), errors: e.min(c) })
                .collect();
            let clicks: u64 = groups.iter().map(|g| g.clicks).sum();
            StateTally { sent: clicks + extra, clicks, groups }
        });
        (state.clone(), state.clone(), state, 0u64..1000).prop_map(|(s, w, v, mixed)| TallyTable {
            slices: 8,
            rounds: s.sent + w.sent + v.sent + mixed,
            mixed_sends: mixed,
            signal: s,
            weak: w,
            vacuum: v,
        })
    }

    proptest! {
        #[test]
        fn slice_of_center_is_identity(j in 0usize..16) {
            prop_assert_eq!(slice_of_phase(slice_center(j, 16), 16).unwrap(), j);
        }

        #[test]
        fn slice_is_periodic(phi in -20.0f64..20.0) {
            let a = slice_of_phase(phi, 16).unwrap();
            let b = slice_of_phase(phi + TAU, 16).unwrap();
            // reduction of phi and phi+2π may differ by one ulp right at a boundary
            prop_assert!(a == b || (a + 1) % 16 == b || (b + 1) % 16 == a);
        }

        #[test]
        fn sift_depends_on_difference_only(a in 0usize..16, b in 0usize..16, d in 0usize..16, k in 0usize..16, right in any::<bool>()) {
            let click = if right { Click::Right } else { Click::Left };
            let s1 = sift(a, b, d, click, 16).unwrap();
            let s2 = sift((a + k) % 16, (b + k) % 16, d, click, 16).unwrap();
            prop_assert_eq!(s1, s2);
        }

        #[test]
        fn entropy_symmetric_and_increasing(x in 0.0f64..0.5, dx in 1e-6f64..0.01) {
            let h = binary_entropy(x).unwrap();
            prop_assert!((h - binary_entropy(1.0 - x).unwrap()).abs() < 1e-12);
            let y = (x + dx).min(0.5);
            if y > x + 1e-9 {
                prop_assert!(binary_entropy(y).unwrap() > h);
            }
        }

        #[test]
        fn tally_merge_commutes_and_associates(a in arb_tally(), b in arb_tally(), c in arb_tally()) {
            prop_assert!(a.validate().is_ok());
            let ab = a.merge(&b).unwrap();
            prop_assert_eq!(&ab, &b.merge(&a).unwrap());
            prop_assert_eq!(ab.merge(&c).unwrap(), a.merge(&b.merge(&c).unwrap()).unwrap());
            prop_assert!(ab.validate().is_ok());
        }
    }
}
