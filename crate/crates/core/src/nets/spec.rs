use std::fmt;

use crate::error::{Error, Result};

/// Layered description of a VGG-style feature extractor: groups of 3×3
/// same-padded convolutions, each group closed by a 2×2 max pool, followed
/// by a fully connected classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    /// Square input resolution in pixels.
    pub resolution: usize,
    pub in_channels: usize,
    /// Output channel count of every conv, group by group.
    pub groups: Vec<Vec<usize>>,
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
    /// Conv layer names (`conv{group}_{index}`, 1-based) whose activations
    /// are exported as feature taps.
    pub taps: Vec<String>,
}

/// One conv layer of a [`NetSpec`], with the resolution it runs at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub name: String,
    pub group: usize,
    pub index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub resolution: usize,
}

impl ConvLayerSpec {
    pub fn output_shape(&self) -> [usize; 3] {
        [self.resolution, self.resolution, self.out_channels]
    }
}

pub fn conv_name(group: usize, index: usize) -> String {
    format!("conv{group}_{index}")
}

impl NetSpec {
    /// Desk-scale default: 32×32 input, three groups of two convs.
    pub fn mini_vgg(num_classes: usize) -> Self {
        let groups = vec![vec![16, 16], vec![32, 32], vec![64, 64]];
        Self {
            resolution: 32,
            in_channels: 3,
            taps: Self::group_end_taps(&groups),
            groups,
            head_hidden: vec![64],
            num_classes,
        }
    }

    /// The 16-conv VGG19 layout at 224×224.
    pub fn vgg19(num_classes: usize) -> Self {
        let groups = vec![
            vec![64; 2],
            vec![128; 2],
            vec![256; 4],
            vec![512; 4],
            vec![512; 4],
        ];
        Self {
            resolution: 224,
            in_channels: 3,
            taps: Self::group_end_taps(&groups),
            groups,
            head_hidden: vec![4096, 4096],
            num_classes,
        }
    }

    pub fn group_end_taps(groups: &[Vec<usize>]) -> Vec<String> {
        groups
            .iter()
            .enumerate()
            .map(|(g, convs)| conv_name(g + 1, convs.len()))
            .collect()
    }

    /// Tap every conv layer instead of only group ends.
    pub fn with_all_taps(mut self) -> Self {
        self.taps = self.conv_layers().into_iter().map(|l| l.name).collect();
        self
    }

    pub fn conv_layers(&self) -> Vec<ConvLayerSpec> {
        let mut layers = Vec::new();
        let mut channels = self.in_channels;
        let mut resolution = self.resolution;
        for (g, convs) in self.groups.iter().enumerate() {
            for (j, &out) in convs.iter().enumerate() {
                layers.push(ConvLayerSpec {
                    name: conv_name(g + 1, j + 1),
                    group: g + 1,
                    index: j + 1,
                    in_channels: channels,
                    out_channels: out,
                    resolution,
                });
                channels = out;
            }
            resolution /= 2;
        }
        layers
    }

    pub fn conv_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Shape after the final pool, `[R/2^groups, R/2^groups, C_last]`.
    pub fn pooled_shape(&self) -> [usize; 3] {
        let r = self.resolution >> self.groups.len();
        let c = self.groups.last().and_then(|g| g.last()).copied().unwrap_or(0);
        [r, r, c]
    }

    pub fn pooled_len(&self) -> usize {
        self.pooled_shape().iter().product()
    }

    /// Declared taps in depth order with their shapes.
    pub fn tap_shapes(&self) -> Vec<(String, [usize; 3])> {
        self.conv_layers()
            .into_iter()
            .filter(|l| self.taps.contains(&l.name))
            .map(|l| {
                let s = l.output_shape();
                (l.name, s)
            })
            .collect()
    }

    pub fn tap_shape(&self, name: &str) -> Option<[usize; 3]> {
        self.tap_shapes()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.groups.iter().any(Vec::is_empty) {
            return Err(Error::Config("every net needs ≥1 group of ≥1 conv".into()));
        }
        if self.in_channels == 0 || self.groups.iter().flatten().any(|&c| c == 0) {
            return Err(Error::Config("channel counts must be ≥ 1".into()));
        }
        let step = 1usize << self.groups.len();
        if self.resolution == 0 || !self.resolution.is_multiple_of(step) {
            return Err(Error::Config(format!(
                "resolution {} not divisible by 2^{} = {step}",
                self.resolution,
                self.groups.len()
            )));
        }
        if self.num_classes == 0 || self.head_hidden.contains(&0) {
            return Err(Error::Config("head widths must be ≥ 1".into()));
        }
        let names: Vec<String> = self.conv_layers().into_iter().map(|l| l.name).collect();
        for (i, t) in self.taps.iter().enumerate() {
            if !names.contains(t) {
                return Err(Error::Config(format!("tap {t} names no conv layer")));
            }
            if self.taps[..i].contains(t) {
                return Err(Error::Config(format!("tap {t} listed twice")));
            }
        }
        Ok(())
    }

    /// Line-oriented `key = value` text, the inverse of [`NetSpec::from_text`].
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let groups = self
            .groups
            .iter()
            .map(|g| join(g))
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "resolution = {}\nin_channels = {}\ngroups = {}\nhead_hidden = {}\nnum_classes = {}\ntaps = {}\n",
            self.resolution,
            self.in_channels,
            groups,
            join(&self.head_hidden),
            self.num_classes,
            self.taps.join(",")
        )
    }

    /// Parse the text form. Unknown keys are rejected; keys the spec does
    /// not own (checkpoint metadata) must be stripped by the caller.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut resolution = None;
        let mut in_channels = None;
        let mut groups = None;
        let mut head_hidden = None;
        let mut num_classes = None;
        let mut taps = None;
        for (key, value) in key_values(text)? {
            match key {
                "resolution" => resolution = Some(parse_usize(key, value)?),
                "in_channels" => in_channels = Some(parse_usize(key, value)?),
                "groups" => {
                    groups = Some(
                        value
                            .split(';')
                            .map(|g| parse_list(key, g))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "head_hidden" => head_hidden = Some(parse_list(key, value)?),
                "num_classes" => num_classes = Some(parse_usize(key, value)?),
                "taps" => {
                    taps = Some(
                        value
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(String::from)
                            .collect(),
                    )
                }
                other => return Err(Error::Config(format!("unknown net spec key {other}"))),
            }
        }
        let missing = |k: &str| Error::Config(format!("net spec lacks {k}"));
        let spec = Self {
            resolution: resolution.ok_or_else(|| missing("resolution"))?,
            in_channels: in_channels.ok_or_else(|| missing("in_channels"))?,
            groups: groups.ok_or_else(|| missing("groups"))?,
            head_hidden: head_hidden.ok_or_else(|| missing("head_hidden"))?,
            num_classes: num_classes.ok_or_else(|| missing("num_classes"))?,
            taps: taps.ok_or_else(|| missing("taps"))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn shape_report(&self) -> ShapeReport {
        let mut rows = vec![(
            "input".to_string(),
            vec![self.resolution, self.resolution, self.in_channels],
        )];
        let layers = self.conv_layers();
        for (g, convs) in self.groups.iter().enumerate() {
            for l in layers.iter().filter(|l| l.group == g + 1) {
                let mark = if self.taps.contains(&l.name) { "*" } else { "" };
                rows.push((format!("{}{mark}", l.name), l.output_shape().to_vec()));
            }
            let r = self.resolution >> (g + 1);
            rows.push((format!("pool{}", g + 1), vec![r, r, *convs.last().unwrap()]));
        }
        for (i, &h) in self.head_hidden.iter().enumerate() {
            rows.push((format!("fc{}", i + 1), vec![h]));
        }
        rows.push(("logits".to_string(), vec![self.num_classes]));
        ShapeReport { rows }
    }
}

/// Per-layer output shapes; `*` marks exported taps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeReport {
    pub rows: Vec<(String, Vec<usize>)>,
}

impl fmt::Display for ShapeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, shape) in &self.rows {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            writeln!(f, "{name:<12} {}", dims.join("×"))?;
        }
        Ok(())
    }
}

pub(crate) fn key_values(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                offset,
                msg: format!("expected `key = value`, got {trimmed:?}"),
            })?;
            out.push((k.trim(), v.trim()));
        }
        offset += line.len();
    }
    Ok(out)
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: {value:?} is not a count")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_usize(key, s))
        .collect()
}
