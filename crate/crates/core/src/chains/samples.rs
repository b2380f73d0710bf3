//! Sample collections produced by chain runs or exact samplers, with a
//! plain-text and a bit-packed binary file format.
//!
//! Text format: header `n=<int> M=<int> seed=<u64> chain=<free text>`, then
//! M lines of space-separated ±1 entries. The chain field extends to the end
//! of the header line, so it can carry run parameters.
//!
//! Binary format: 16-byte magic (`MSLSAMP1` padded with zeros), u32 LE spin
//! count, u32 LE sample count, then ⌈n/8⌉ bytes per sample, bit i of byte k
//! holding spin 8k+i (set bit = +1). The binary layout carries no
//! seed/chain metadata; readers fill in placeholders.

use std::io::{BufReader, Read as _, Write as _};
use std::path::Path;

use rand::Rng;

use crate::chains::ChainKind;
use crate::math::sigmoid;
use crate::rng::from_seed;
use crate::spin::{IsingModel, SpinConfiguration};
use crate::{Error, Result};

const BINARY_MAGIC: [u8; 16] = *b"MSLSAMP1\0\0\0\0\0\0\0\0";

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n: usize,
    seed: u64,
    chain: String,
    data: Vec<SpinConfiguration>,
}

impl SampleSet {
    pub fn new(
        n: usize,
        seed: u64,
        chain: impl Into<String>,
        data: Vec<SpinConfiguration>,
    ) -> Result<Self> {
        let chain = chain.into();
        if chain.contains('\n') || chain.is_empty() {
            return Err(Error::InvalidSamples(
                "chain label must be non-empty single-line text".into(),
            ));
        }
        if let Some(bad) = data.iter().position(|c| c.n() != n) {
            return Err(Error::DimensionMismatch(format!(
                "sample {bad} has {} spins, expected {n}",
                data[bad].n()
            )));
        }
        Ok(Self { n, seed, chain, data })
    }

    /// Build from canonical state indices (bit i = spin i, set = +1).
    pub fn from_indices(
        n: usize,
        seed: u64,
        chain: impl Into<String>,
        indices: &[usize],
    ) -> Result<Self> {
        let data = indices
            .iter()
            .map(|s| SpinConfiguration::from_index(*s, n))
            .collect();
        Self::new(n, seed, chain, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of samples M.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chain(&self) -> &str {
        &self.chain
    }

    pub fn configs(&self) -> &[SpinConfiguration] {
        &self.data
    }

    pub fn config(&self, t: usize) -> &SpinConfiguration {
        &self.data[t]
    }

    /// Per-sample magnetization Σ_i σ_i / n.
    pub fn magnetizations(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|c| c.spin_sum() as f64 / self.n as f64)
            .collect()
    }

    /// Mean of spin u across samples.
    pub fn spin_mean(&self, u: usize) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|c| c.spin(u) as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "n={} M={} seed={} chain={}\n",
            self.n,
            self.data.len(),
            self.seed,
            self.chain
        );
        for c in &self.data {
            let line: Vec<String> = c.spins().iter().map(|s| s.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sample file".into()))?;
        let (head, chain) = header
            .split_once(" chain=")
            .ok_or_else(|| Error::Parse(format!("header missing chain field: {header}")))?;
        let mut n = None;
        let mut m = None;
        let mut seed = None;
        for token in head.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token {token}")))?;
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "M" => m = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|e| Error::Parse(e.to_string()))?)
                }
                other => return Err(Error::Parse(format!("unknown header key {other}"))),
            }
        }
        let (n, m, seed) = match (n, m, seed) {
            (Some(n), Some(m), Some(s)) => (n, m, s),
            _ => return Err(Error::Parse(format!("incomplete header: {header}"))),
        };
        let mut data = Vec::with_capacity(m);
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let spins: Result<Vec<i8>> = line
                .split_whitespace()
                .map(|tok| match tok {
                    "1" | "+1" => Ok(1i8),
                    "-1" => Ok(-1i8),
                    other => Err(Error::Parse(format!(
                        "sample line {}: bad spin value {other}",
                        idx + 1
                    ))),
                })
                .collect();
            let spins = spins?;
            if spins.len() != n {
                return Err(Error::Parse(format!(
                    "sample line {} has {} spins, expected {n}",
                    idx + 1,
                    spins.len()
                )));
            }
            data.push(SpinConfiguration::new(spins)?);
        }
        if data.len() != m {
            return Err(Error::Parse(format!(
                "header claims {m} samples, file has {}",
                data.len()
            )));
        }
        Self::new(n, seed, chain, data)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let bytes_per_sample = self.n.div_ceil(8);
        let mut out =
            Vec::with_capacity(24 + bytes_per_sample * self.data.len());
        out.extend_from_slice(&BINARY_MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.data.len() as u32).to_le_bytes());
        for c in &self.data {
            let mut packed = vec![0u8; bytes_per_sample];
            for (i, s) in c.spins().iter().enumerate() {
                if *s == 1 {
                    packed[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&packed);
        }
        out
    }

    /// Parse the binary layout. Seed and chain are not stored in this
    /// format; they come back as 0 and "binary".
    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || bytes[..16] != BINARY_MAGIC {
            return Err(Error::Parse("not a packed sample file (bad magic)".into()));
        }
        let n = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
        if n == 0 {
            return Err(Error::Parse("sample file claims zero spins".into()));
        }
        let bytes_per_sample = n.div_ceil(8);
        let expected = 24 + m * bytes_per_sample;
        if bytes.len() != expected {
            return Err(Error::Parse(format!(
                "sample payload is {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut data = Vec::with_capacity(m);
        for t in 0..m {
            let chunk = &bytes[24 + t * bytes_per_sample..24 + (t + 1) * bytes_per_sample];
            let spins: Vec<i8> = (0..n)
                .map(|i| if chunk[i / 8] >> (i % 8) & 1 == 1 { 1 } else { -1 })
                .collect();
            data.push(SpinConfiguration::new(spins)?);
        }
        Self::new(n, 0, "binary", data)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_binary())?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(std::fs::File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_binary(&bytes)
    }

    /// Read either format, sniffing the binary magic.
    pub fn read_auto(path: &Path) -> Result<Self> {
        let mut head = [0u8; 16];
        let mut f = std::fs::File::open(path)?;
        let got = f.read(&mut head)?;
        drop(f);
        if got == 16 && head == BINARY_MAGIC {
            Self::read_binary(path)
        } else {
            Self::read_text(path)
        }
    }
}

/// Simulate a single-site chain and collect thinned samples.
///
/// Performs `steps` single-site updates from `start`; after the first
/// `burn_in` updates, every `thinning`-th state is recorded, giving
/// (steps − burn_in)/thinning samples. Bit-for-bit reproducible for a
/// fixed seed.
pub fn run_chain(
    model: &IsingModel,
    kind: ChainKind,
    start: &SpinConfiguration,
    steps: u64,
    burn_in: u64,
    thinning: u64,
    seed: u64,
) -> Result<SampleSet> {
    if start.n() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "start has {} spins, model has {}",
            start.n(),
            model.n()
        )));
    }
    if thinning == 0 {
        return Err(Error::InvalidParameter("thinning must be ≥ 1".into()));
    }
    if burn_in > steps {
        return Err(Error::InvalidParameter(format!(
            "burn_in {burn_in} exceeds steps {steps}"
        )));
    }
    let n = model.n();
    let mut rng = from_seed(seed);
    let mut spins: Vec<i8> = start.spins().to_vec();
    let mut data = Vec::with_capacity(((steps - burn_in) / thinning) as usize);
    for step in 1..=steps {
        let u = rng.random_range(0..n);
        let mut l = model.fields()[u];
        for &(v, w) in model.neighbors(u) {
            l += w * spins[v] as f64;
        }
        let r: f64 = rng.random();
        match kind {
            ChainKind::Glauber => {
                spins[u] = if r < sigmoid(2.0 * l) { 1 } else { -1 };
            }
            ChainKind::Metropolis => {
                let de = -2.0 * spins[u] as f64 * l;
                if r < de.min(0.0).exp() {
                    spins[u] = -spins[u];
                }
            }
        }
        if step > burn_in && (step - burn_in) % thinning == 0 {
            data.push(SpinConfiguration::new(spins.clone())?);
        }
    }
    SampleSet::new(
        n,
        seed,
        format!("{kind} burn_in={burn_in} thinning={thinning}"),
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::IsingModel;

    fn small_set() -> SampleSet {
        SampleSet::new(
            3,
            42,
            "glauber burn_in=10 thinning=2",
            vec![
                SpinConfiguration::new(vec![1, -1, 1]).unwrap(),
                SpinConfiguration::new(vec![-1, -1, -1]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip_preserves_everything() {
        let set = small_set();
        let text = set.to_text();
        let back = SampleSet::from_text(&text).unwrap();
        assert_eq!(set, back);
        assert_eq!(back.chain(), "glauber burn_in=10 thinning=2");
        assert_eq!(back.seed(), 42);
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn text_parse_rejects_malformed_input() {
        assert!(SampleSet::from_text("").is_err());
        assert!(SampleSet::from_text("n=3 M=1 seed=1\n1 1 1\n").is_err()); // no chain
        assert!(SampleSet::from_text("n=3 M=1 seed=1 chain=x\n1 1\n").is_err()); // short row
        assert!(SampleSet::from_text("n=3 M=1 seed=1 chain=x\n1 2 1\n").is_err()); // bad value
        assert!(SampleSet::from_text("n=3 M=2 seed=1 chain=x\n1 1 1\n").is_err()); // count off
    }

    #[test]
    fn binary_round_trip_preserves_data() {
        // 9 spins exercises the multi-byte packing path.
        let set = SampleSet::new(
            9,
            7,
            "exact",
            vec![
                SpinConfiguration::new(vec![1, -1, 1, 1, -1, -1, 1, -1, 1]).unwrap(),
                SpinConfiguration::all_down(9),
                SpinConfiguration::all_up(9),
            ],
        )
        .unwrap();
        let bytes = set.to_binary();
        assert_eq!(&bytes[..8], b"MSLSAMP1");
        assert_eq!(bytes.len(), 24 + 3 * 2);
        let back = SampleSet::from_binary(&bytes).unwrap();
        assert_eq!(back.n(), 9);
        assert_eq!(back.configs(), set.configs());
        // Writing the parsed set again reproduces identical bytes.
        assert_eq!(back.to_binary(), bytes);
    }

    #[test]
    fn binary_rejects_corrupt_input() {
        assert!(SampleSet::from_binary(b"nonsense").is_err());
        let mut bytes = small_set().to_binary();
        bytes.pop();
        assert!(SampleSet::from_binary(&bytes).is_err());
    }

    #[test]
    fn from_indices_uses_canonical_encoding() {
        let set = SampleSet::from_indices(3, 0, "exact", &[0b101, 0b010]).unwrap();
        assert_eq!(set.config(0).spins(), &[1, -1, 1]);
        assert_eq!(set.config(1).spins(), &[-1, 1, -1]);
    }

    #[test]
    fn run_chain_is_deterministic() {
        let model = IsingModel::zero(4);
        let start = SpinConfiguration::all_up(4);
        let a = run_chain(&model, ChainKind::Glauber, &start, 1000, 200, 4, 99).unwrap();
        let b = run_chain(&model, ChainKind::Glauber, &start, 1000, 200, 4, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        let c = run_chain(&model, ChainKind::Glauber, &start, 1000, 200, 4, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn run_chain_validates_parameters() {
        let model = IsingModel::zero(4);
        let start = SpinConfiguration::all_up(4);
        assert!(run_chain(&model, ChainKind::Glauber, &start, 10, 20, 1, 0).is_err());
        assert!(run_chain(&model, ChainKind::Glauber, &start, 10, 0, 0, 0).is_err());
        let short = SpinConfiguration::all_up(3);
        assert!(run_chain(&model, ChainKind::Glauber, &short, 10, 0, 1, 0).is_err());
    }

    #[test]
    fn zero_model_run_has_balanced_spins() {
        let model = IsingModel::zero(8);
        let start = SpinConfiguration::all_up(8);
        for kind in [ChainKind::Glauber, ChainKind::Metropolis] {
            let set = run_chain(&model, kind, &start, 40_000, 8_000, 16, 4242).unwrap();
            assert_eq!(set.len(), 2000);
            for u in 0..8 {
                let mean = set.spin_mean(u);
                assert!(mean.abs() < 0.12, "{kind} spin {u}: mean {mean}");
            }
        }
    }

    #[test]
    fn ferromagnet_started_up_stays_up() {
        // Complete graph of ferromagnetic couplings: leaving the all-up
        // well requires climbing a free-energy barrier of many nats, so
        // magnetization stays positive far beyond this run length. (A ring
        // would not do: its domain walls diffuse freely.)
        let n = 10;
        let mut couplings = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                couplings.push((u, v, 0.5));
            }
        }
        let model = IsingModel::new(n, vec![0.0; n], couplings).unwrap();
        let set = run_chain(
            &model,
            ChainKind::Glauber,
            &SpinConfiguration::all_up(n),
            50_000,
            0,
            50,
            7,
        )
        .unwrap();
        assert!(set.magnetizations().iter().all(|m| *m > 0.0));
    }

    #[test]
    fn file_round_trips() {
        let dir = std::env::temp_dir().join("msl-sample-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let set = small_set();

        let text_path = dir.join("samples.txt");
        set.write_text(&text_path).unwrap();
        assert_eq!(SampleSet::read_text(&text_path).unwrap(), set);
        assert_eq!(SampleSet::read_auto(&text_path).unwrap(), set);

        let bin_path = dir.join("samples.bin");
        set.write_binary(&bin_path).unwrap();
        let back = SampleSet::read_auto(&bin_path).unwrap();
        assert_eq!(back.configs(), set.configs());

        std::fs::remove_dir_all(&dir).ok();
    }
}
