//! Utility functions ("games") and the counting oracle that estimators query.
//!
//! Game descriptors: `wvg:@<path>`, `soug:@<path>`, `table:@<path>`,
//! `corner:<n>,<C>,<seed>`, plus `randtable:<n>,<seed>` (uniform values in
//! `[0, 1)`) and `const:<n>,<c>`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::coalition::Coalition;
use crate::error::{parse_err, Error, Result};
use crate::sampling::{splitmix64, RandomSource};

/// Largest player count accepted for table-backed games.
pub const MAX_TABLE_N: usize = 26;

pub trait Game: Send + Sync {
    fn n(&self) -> usize;
    fn value(&self, s: &Coalition) -> f64;
    /// A bound `C` with `|U(S)| <= C`, if known.
    fn sup_bound(&self) -> Option<f64>;
    fn describe(&self) -> String;
}

/// A game plus an atomic query counter.
pub struct UtilityOracle {
    game: Arc<dyn Game>,
    count: AtomicU64,
}

impl UtilityOracle {
    pub fn new(game: Arc<dyn Game>) -> Self {
        Self {
            game,
            count: AtomicU64::new(0),
        }
    }

    pub fn from_game(game: impl Game + 'static) -> Self {
        Self::new(Arc::new(game))
    }

    pub fn n(&self) -> usize {
        self.game.n()
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.game.sup_bound()
    }

    pub fn describe(&self) -> String {
        self.game.describe()
    }

    pub fn game(&self) -> &Arc<dyn Game> {
        &self.game
    }

    /// One query: increments the counter by exactly one.
    pub fn evaluate(&self, s: &Coalition) -> f64 {
        debug_assert_eq!(s.n(), self.n());
        self.count.fetch_add(1, Ordering::Relaxed);
        self.game.value(s)
    }

    pub fn query_count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset_count(&self) -> u64 {
        self.count.swap(0, Ordering::Relaxed)
    }
}

impl fmt::Debug for UtilityOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilityOracle")
            .field("game", &self.game.describe())
            .field("queries", &self.query_count())
            .finish()
    }
}

/// `U^c(S) = U([n] \ S)`.
pub fn complement_transform(oracle: &UtilityOracle) -> UtilityOracle {
    UtilityOracle::new(Arc::new(Complement(oracle.game.clone())))
}

/// `U(S) + c`.
pub fn shift_transform(oracle: &UtilityOracle, c: f64) -> UtilityOracle {
    UtilityOracle::new(Arc::new(Shifted {
        inner: oracle.game.clone(),
        shift: c,
    }))
}

/// The same game behind a fresh counter.
pub fn counting_wrapper(oracle: &UtilityOracle) -> UtilityOracle {
    UtilityOracle::new(oracle.game.clone())
}

pub struct Complement(pub Arc<dyn Game>);

impl Game for Complement {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn value(&self, s: &Coalition) -> f64 {
        self.0.value(&s.complement())
    }
    fn sup_bound(&self) -> Option<f64> {
        self.0.sup_bound()
    }
    fn describe(&self) -> String {
        format!("complement({})", self.0.describe())
    }
}

pub struct Shifted {
    pub inner: Arc<dyn Game>,
    pub shift: f64,
}

impl Game for Shifted {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn value(&self, s: &Coalition) -> f64 {
        self.inner.value(s) + self.shift
    }
    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound().map(|c| c + self.shift.abs())
    }
    fn describe(&self) -> String {
        format!("{}+{}", self.inner.describe(), self.shift)
    }
}

/// `sum_k c_k U_k`.
pub struct LinearCombination {
    terms: Vec<(f64, Arc<dyn Game>)>,
}

impl LinearCombination {
    pub fn new(terms: Vec<(f64, Arc<dyn Game>)>) -> Result<Self> {
        let n = terms
            .first()
            .map(|(_, g)| g.n())
            .ok_or_else(|| Error::InvalidGame("empty linear combination".into()))?;
        if terms.iter().any(|(_, g)| g.n() != n) {
            return Err(Error::InvalidGame(
                "linear combination of games with different n".into(),
            ));
        }
        Ok(Self { terms })
    }
}

impl Game for LinearCombination {
    fn n(&self) -> usize {
        self.terms[0].1.n()
    }
    fn value(&self, s: &Coalition) -> f64 {
        self.terms.iter().map(|(c, g)| c * g.value(s)).sum()
    }
    fn sup_bound(&self) -> Option<f64> {
        self.terms
            .iter()
            .map(|(c, g)| g.sup_bound().map(|b| c.abs() * b))
            .sum()
    }
    fn describe(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(c, g)| format!("{c}*{}", g.describe()))
            .collect();
        parts.join("+")
    }
}

/// `U(S) = 1` if the members' weight reaches the quota, else 0.
#[derive(Debug, Clone)]
pub struct WeightedVotingGame {
    weights: Vec<f64>,
    quota: f64,
    label: String,
}

impl WeightedVotingGame {
    pub fn new(weights: Vec<f64>, quota: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidGame("voting game needs at least one weight".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidGame("voting weights must be finite and >= 0".into()));
        }
        if !(quota > 0.0) {
            return Err(Error::InvalidGame(format!("quota must be > 0, got {quota}")));
        }
        let label = format!("wvg(n={})", weights.len());
        Ok(Self {
            weights,
            quota,
            label,
        })
    }

    /// Reads `quota=<q>` and `weights=<w1> <w2> ...` lines.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut quota = None;
        let mut weights = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| table_err(path, idx + 1, msg);
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            match key.trim() {
                "quota" => quota = Some(val.trim().parse::<f64>().map_err(|e| err(e.to_string()))?),
                "weights" => {
                    weights = Some(
                        val.split(|c: char| c.is_whitespace() || c == ',')
                            .filter(|t| !t.is_empty())
                            .map(|t| t.parse::<f64>().map_err(|e| err(e.to_string())))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        let quota = quota.ok_or_else(|| table_err(path, 0, "missing quota=".into()))?;
        let weights = weights.ok_or_else(|| table_err(path, 0, "missing weights=".into()))?;
        let mut g = Self::new(weights, quota)?;
        g.label = format!("wvg:{}", file_label(path));
        Ok(g)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Game for WeightedVotingGame {
    fn n(&self) -> usize {
        self.weights.len()
    }
    fn value(&self, s: &Coalition) -> f64 {
        let total: f64 = s.members().map(|i| self.weights[i]).sum();
        if total >= self.quota {
            1.0
        } else {
            0.0
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(1.0)
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// `U(S) = sum_k c_k [T_k ⊆ S]`.
#[derive(Debug, Clone)]
pub struct UnanimitySum {
    n: usize,
    terms: Vec<(Coalition, f64)>,
    label: String,
}

impl UnanimitySum {
    pub fn new(n: usize, terms: Vec<(Coalition, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGame("unanimity game needs n >= 1".into()));
        }
        for (t, _) in &terms {
            if t.n() != n {
                return Err(Error::InvalidGame("unanimity carrier has wrong n".into()));
            }
            if t.is_empty() {
                return Err(Error::InvalidGame("unanimity carrier must be nonempty".into()));
            }
        }
        Ok(Self {
            n,
            terms,
            label: format!("soug(n={n})"),
        })
    }

    /// Reads `n=<int>` then one `<coef> <i1> <i2> ...` line per term
    /// (0-based player indices).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut lines = numbered_lines(&text);
        let (hline, header) = lines
            .next()
            .ok_or_else(|| table_err(path, 0, "empty file".into()))?;
        let n = parse_header(path, hline, header)?;
        let mut terms = Vec::new();
        for (no, line) in lines {
            let mut toks = line.split_whitespace();
            let coef: f64 = toks
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e: std::num::ParseFloatError| table_err(path, no, e.to_string()))?;
            let mut carrier = Coalition::empty(n);
            for t in toks {
                let i: usize = t
                    .parse()
                    .map_err(|e: std::num::ParseIntError| table_err(path, no, e.to_string()))?;
                if i >= n {
                    return Err(table_err(path, no, format!("player {i} out of range")));
                }
                carrier.insert(i);
            }
            if carrier.is_empty() {
                return Err(table_err(path, no, "unanimity carrier must be nonempty".into()));
            }
            terms.push((carrier, coef));
        }
        let mut g = Self::new(n, terms)?;
        g.label = format!("soug:{}", file_label(path));
        Ok(g)
    }
}

impl Game for UnanimitySum {
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, s: &Coalition) -> f64 {
        self.terms
            .iter()
            .filter(|(t, _)| t.is_subset(s))
            .map(|(_, c)| c)
            .sum()
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.terms.iter().map(|(_, c)| c.abs()).sum())
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// A full lookup table of `2^n` values indexed by mask.
#[derive(Debug, Clone)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
    sup: f64,
    label: String,
}

impl TableGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_TABLE_N {
            return Err(Error::InvalidGame(format!(
                "table games need 1 <= n <= {MAX_TABLE_N}, got {n}"
            )));
        }
        if values.len() != 1usize << n {
            return Err(Error::InvalidGame(format!(
                "table for n = {n} needs {} values, got {}",
                1usize << n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGame("table values must be finite".into()));
        }
        let sup = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Ok(Self {
            n,
            values,
            sup,
            label: format!("table(n={n})"),
        })
    }

    /// Independent uniform values in `[lo, hi)`.
    pub fn random(n: usize, seed: u64, lo: f64, hi: f64) -> Result<Self> {
        let mut rng = RandomSource::new(seed);
        let values = (0..1usize << n.min(MAX_TABLE_N))
            .map(|_| lo + (hi - lo) * rng.rng().random::<f64>())
            .collect();
        let mut g = Self::new(n, values)?;
        g.label = format!("randtable:{n},{seed}");
        Ok(g)
    }

    /// Builds a table by evaluating another game on every mask.
    pub fn tabulate(game: &dyn Game) -> Result<Self> {
        let n = game.n();
        if n == 0 || n > MAX_TABLE_N {
            return Err(Error::TooLarge {
                what: "tabulated game",
                n,
                limit: MAX_TABLE_N,
            });
        }
        let values = (0..1u64 << n)
            .map(|mask| game.value(&Coalition::from_mask(n, mask)))
            .collect();
        let mut g = Self::new(n, values)?;
        g.label = game.describe();
        Ok(g)
    }

    /// Reads `n=<int>` then one `<mask> <value>` line per subset.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut lines = numbered_lines(&text);
        let (hline, header) = lines
            .next()
            .ok_or_else(|| table_err(path, 0, "empty file".into()))?;
        let n = parse_header(path, hline, header)?;
        if n == 0 || n > MAX_TABLE_N {
            return Err(table_err(
                path,
                hline,
                format!("n must be in 1..={MAX_TABLE_N}, got {n}"),
            ));
        }
        let size = 1usize << n;
        let mut values = vec![f64::NAN; size];
        let mut seen = vec![false; size];
        for (no, line) in lines {
            let mut toks = line.split_whitespace();
            let (Some(mask), Some(value), None) = (toks.next(), toks.next(), toks.next()) else {
                return Err(table_err(path, no, format!("expected `<mask> <value>`, got {line:?}")));
            };
            let mask: usize = mask
                .parse()
                .map_err(|e: std::num::ParseIntError| table_err(path, no, e.to_string()))?;
            let value: f64 = value
                .parse()
                .map_err(|e: std::num::ParseFloatError| table_err(path, no, e.to_string()))?;
            if mask >= size {
                return Err(table_err(path, no, format!("mask {mask} has bits >= n")));
            }
            if seen[mask] {
                return Err(table_err(path, no, format!("duplicate mask {mask}")));
            }
            seen[mask] = true;
            values[mask] = value;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(table_err(
                path,
                0,
                format!(
                    "{} of {size} masks missing (first: {missing})",
                    seen.iter().filter(|s| !**s).count()
                ),
            ));
        }
        let mut g = Self::new(n, values)?;
        g.label = format!("table:{}", file_label(path));
        Ok(g)
    }

    /// Writes the table in the format read by [`TableGame::from_file`].
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "n={}", self.n)?;
        for (mask, v) in self.values.iter().enumerate() {
            writeln!(out, "{mask} {v:?}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Game for TableGame {
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, s: &Coalition) -> f64 {
        self.values[s.words()[0] as usize]
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.sup)
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// `U(S) ∈ {-C, +C}` with a seeded hash-derived sign.
///
/// The sign hash is `h = splitmix64(seed)`, then `h = splitmix64(h ^ w)` for
/// each 64-bit mask word `w` in order; the value is `+C` when the top bit of
/// `h` is clear and `-C` otherwise.
#[derive(Debug, Clone)]
pub struct CornerCase {
    n: usize,
    c: f64,
    seed: u64,
}

impl CornerCase {
    pub fn new(n: usize, c: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGame("corner game needs n >= 1".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidGame(format!("corner game needs C > 0, got {c}")));
        }
        Ok(Self { n, c, seed })
    }

    pub fn sign_hash(seed: u64, words: &[u64]) -> u64 {
        words
            .iter()
            .fold(splitmix64(seed), |h, &w| splitmix64(h ^ w))
    }
}

impl Game for CornerCase {
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, s: &Coalition) -> f64 {
        if Self::sign_hash(self.seed, s.words()) >> 63 == 0 {
            self.c
        } else {
            -self.c
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.c)
    }
    fn describe(&self) -> String {
        format!("corner:{},{},{}", self.n, self.c, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct ConstantGame {
    pub n: usize,
    pub c: f64,
}

impl Game for ConstantGame {
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, _: &Coalition) -> f64 {
        self.c
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.c.abs())
    }
    fn describe(&self) -> String {
        format!("const:{},{}", self.n, self.c)
    }
}

/// `U(S) = f(|S|)`.
pub struct SizeFunctionGame {
    n: usize,
    table: Vec<f64>,
    label: String,
}

impl SizeFunctionGame {
    pub fn new(n: usize, f: impl Fn(usize) -> f64, label: impl Into<String>) -> Self {
        Self {
            n,
            table: (0..=n).map(f).collect(),
            label: label.into(),
        }
    }
}

impl Game for SizeFunctionGame {
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, s: &Coalition) -> f64 {
        self.table[s.len()]
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.table.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Parses a game descriptor.
pub fn parse_game(input: &str) -> Result<Arc<dyn Game>> {
    let s = input.trim();
    let (head, rest) = s
        .split_once(':')
        .ok_or_else(|| parse_err("game", input, "expected <kind>:<args>"))?;
    let path_arg = || -> Result<PathBuf> {
        rest.strip_prefix('@')
            .map(PathBuf::from)
            .ok_or_else(|| parse_err("game", input, "expected @<path>"))
    };
    let args = || -> Vec<&str> { rest.split(',').map(str::trim).collect() };
    let num = |tok: &str| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|e| parse_err("game", input, e.to_string()))
    };
    let int = |tok: &str| -> Result<u64> {
        tok.parse::<u64>()
            .map_err(|e| parse_err("game", input, e.to_string()))
    };
    match head {
        "wvg" => Ok(Arc::new(WeightedVotingGame::from_file(path_arg()?)?)),
        "soug" => Ok(Arc::new(UnanimitySum::from_file(path_arg()?)?)),
        "table" => Ok(Arc::new(TableGame::from_file(path_arg()?)?)),
        "corner" => match args()[..] {
            [n, c, seed] => Ok(Arc::new(CornerCase::new(
                int(n)? as usize,
                num(c)?,
                int(seed)?,
            )?)),
            _ => Err(parse_err("game", input, "expected corner:<n>,<C>,<seed>")),
        },
        "randtable" => match args()[..] {
            [n, seed] => Ok(Arc::new(TableGame::random(int(n)? as usize, int(seed)?, 0.0, 1.0)?)),
            _ => Err(parse_err("game", input, "expected randtable:<n>,<seed>")),
        },
        "const" => match args()[..] {
            [n, c] => Ok(Arc::new(ConstantGame {
                n: int(n)? as usize,
                c: num(c)?,
            })),
            _ => Err(parse_err("game", input, "expected const:<n>,<c>")),
        },
        _ => Err(parse_err("game", input, "unknown game kind")),
    }
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_header(path: &Path, line: usize, header: &str) -> Result<usize> {
    header
        .strip_prefix("n=")
        .ok_or_else(|| table_err(path, line, format!("expected `n=<int>` header, got {header:?}")))?
        .trim()
        .parse()
        .map_err(|e: std::num::ParseIntError| table_err(path, line, e.to_string()))
}

fn table_err(path: &Path, line: usize, msg: String) -> Error {
    Error::Table {
        path: path.to_path_buf(),
        line,
        msg,
    }
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
