use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Architecture hyper-parameters of MCAF-Net.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelConfig {
    /// Channel widths of the three encoder stages followed by the two
    /// decoder stages.
    pub embed_dims: [usize; 5],
    /// MFIB count per stage.
    pub depths: [usize; 5],
    /// MFIBs chained inside one MFIBA before its closing 3×3 conv.
    pub mfib_cascade: usize,
    pub mlp_ratio: f64,
    /// Side length of the learnable query maps before resizing.
    pub query_base: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Ablation switch: decoder upsampling through CSAM or a bare
    /// 1×1 conv + PixelShuffle.
    pub use_csam: bool,
    /// Ablation switch: skip fusion through MFAFM or plain addition.
    pub use_mfafm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dims: [24, 48, 96, 48, 24],
            depths: [8, 8, 16, 8, 8],
            mfib_cascade: 3,
            mlp_ratio: 2.0,
            query_base: 8,
            in_channels: 3,
            out_channels: 3,
            use_csam: true,
            use_mfafm: true,
        }
    }
}

/// Grouping of the MFIB feed-forward 1×1 layers.
pub const MLP_GROUPS: usize = 4;

impl ModelConfig {
    /// Small configuration for tests and the toy trainer.
    pub fn toy() -> Self {
        Self {
            embed_dims: [8, 16, 32, 16, 8],
            depths: [1; 5],
            ..Self::default()
        }
    }

    pub fn mlp_hidden(&self, c: usize) -> usize {
        (self.mlp_ratio * c as f64).round() as usize
    }

    /// Width shared by the three MFAFM branches.
    pub fn fusion_width(&self) -> usize {
        self.embed_dims[0]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.in_channels != 3 || self.out_channels != 3 {
            return bad("only 3-channel input and output are supported".into());
        }
        for &c in &self.embed_dims {
            if c == 0 || c % 4 != 0 {
                return bad(format!("embed dim {c} must be a positive multiple of 4"));
            }
            let hid = self.mlp_hidden(c);
            if hid == 0 || hid % MLP_GROUPS != 0 {
                return bad(format!(
                    "mlp hidden width {hid} not divisible by {MLP_GROUPS}"
                ));
            }
        }
        if self.depths.contains(&0) {
            return bad("all depths must be >= 1".into());
        }
        if self.mfib_cascade == 0 || self.query_base == 0 {
            return bad("mfib_cascade and query_base must be >= 1".into());
        }
        if !(self.mlp_ratio > 0.0) {
            return bad(format!("mlp_ratio {} must be positive", self.mlp_ratio));
        }
        let [c1, c2, _, c4, c5] = self.embed_dims;
        if !self.use_mfafm && (c4 != c2 || c5 != c1) {
            return bad("additive skip fusion needs symmetric embed dims".into());
        }
        Ok(())
    }

    /// MFIB counts of the MFIBAs making up a stage of `depth` blocks.
    pub fn cascade_chunks(&self, depth: usize) -> Vec<usize> {
        let mut out = vec![self.mfib_cascade; depth / self.mfib_cascade];
        if depth % self.mfib_cascade != 0 {
            out.push(depth % self.mfib_cascade);
        }
        out
    }

    /// Plain `key=value` lines, parseable by [`ModelConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "embed_dims={}", join(&self.embed_dims));
        let _ = writeln!(s, "depths={}", join(&self.depths));
        let _ = writeln!(s, "mfib_cascade={}", self.mfib_cascade);
        let _ = writeln!(s, "mlp_ratio={}", self.mlp_ratio);
        let _ = writeln!(s, "query_base={}", self.query_base);
        let _ = writeln!(s, "in_channels={}", self.in_channels);
        let _ = writeln!(s, "out_channels={}", self.out_channels);
        let _ = writeln!(s, "use_csam={}", self.use_csam);
        let _ = writeln!(s, "use_mfafm={}", self.use_mfafm);
        s
    }

    /// Parse `key=value` lines. Unknown keys are rejected; missing keys keep
    /// their defaults. Blank lines and `#` comments are ignored.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::Invalid(format!("config line {}: {m}", lineno + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            let int = |s: &str| s.trim().parse::<usize>().map_err(|_| err("bad integer"));
            let five = |s: &str| -> Result<[usize; 5]> {
                let xs = s.split(',').map(int).collect::<Result<Vec<_>>>()?;
                xs.try_into()
                    .map_err(|_| err("expected 5 comma-separated values"))
            };
            let flag = |s: &str| s.parse::<bool>().map_err(|_| err("expected true or false"));
            match k {
                "embed_dims" => cfg.embed_dims = five(v)?,
                "depths" => cfg.depths = five(v)?,
                "mfib_cascade" => cfg.mfib_cascade = int(v)?,
                "mlp_ratio" => cfg.mlp_ratio = v.parse().map_err(|_| err("bad number"))?,
                "query_base" => cfg.query_base = int(v)?,
                "in_channels" => cfg.in_channels = int(v)?,
                "out_channels" => cfg.out_channels = int(v)?,
                "use_csam" => cfg.use_csam = flag(v)?,
                "use_mfafm" => cfg.use_mfafm = flag(v)?,
                _ => return Err(err(&format!("unknown key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
