//! Network architecture as data: a line-oriented text format describing the
//! coarse stage, the two refinement branches and the decoder.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Dilations of the local feature extraction stack.
pub const LFE_DILATIONS: [usize; 6] = [2, 4, 8, 8, 4, 2];

/// Channels fed to the coarse stage and to each refinement branch: heights
/// and the void mask.
pub const INPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
    },
    /// Six 3×3 conv + ELU stages with dilations [`LFE_DILATIONS`].
    Lfe { channels: usize },
    Attention { patch: usize, lambda: f64 },
    Upsample,
    Elu,
    Tanh,
}

impl LayerSpec {
    fn out_channels(&self, input: usize) -> usize {
        match *self {
            LayerSpec::Conv { out_ch, .. } => out_ch,
            _ => input,
        }
    }

    fn expected_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv { in_ch, .. } => Some(in_ch),
            LayerSpec::Lfe { channels } => Some(channels),
            _ => None,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                dilation,
            } => write!(f, "conv in={in_ch} out={out_ch} k={kernel} s={stride} d={dilation}"),
            LayerSpec::Lfe { channels } => write!(f, "lfe ch={channels}"),
            LayerSpec::Attention { patch, lambda } => write!(f, "attention patch={patch} lambda={lambda}"),
            LayerSpec::Upsample => f.write_str("upsample x2"),
            LayerSpec::Elu => f.write_str("elu"),
            LayerSpec::Tanh => f.write_str("tanh"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub coarse: Vec<LayerSpec>,
    pub branch_a: Vec<LayerSpec>,
    pub branch_b: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

/// Architecture used by the CLI when no spec file is given.
pub const DESK_SPEC: &str = "\
name desk
coarse
conv in=2 out=32 k=5 s=1 d=1
elu
conv in=32 out=64 k=3 s=2 d=1
elu
conv in=64 out=64 k=3 s=2 d=1
elu
lfe ch=64
upsample x2
conv in=64 out=32 k=3 s=1 d=1
elu
upsample x2
conv in=32 out=16 k=3 s=1 d=1
elu
conv in=16 out=1 k=3 s=1 d=1
tanh
refine
branch A
conv in=2 out=32 k=5 s=1 d=1
elu
conv in=32 out=64 k=3 s=2 d=1
elu
conv in=64 out=64 k=3 s=2 d=1
elu
lfe ch=64
branch B
conv in=2 out=32 k=5 s=1 d=1
elu
conv in=32 out=64 k=3 s=2 d=1
elu
conv in=64 out=64 k=3 s=2 d=1
elu
attention patch=3 lambda=10
conv in=64 out=64 k=3 s=1 d=1
elu
decoder
conv in=128 out=64 k=3 s=1 d=1
elu
upsample x2
conv in=64 out=32 k=3 s=1 d=1
elu
upsample x2
conv in=32 out=16 k=3 s=1 d=1
elu
conv in=16 out=1 k=3 s=1 d=1
tanh
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Coarse,
    Refine,
    BranchA,
    BranchB,
    Decoder,
}

impl NetworkSpec {
    pub fn desk() -> Self {
        DESK_SPEC.parse().expect("built-in spec is valid")
    }

    /// Named stages in parameter order.
    pub fn stages(&self) -> [(&'static str, &[LayerSpec]); 4] {
        [
            ("coarse", &self.coarse),
            ("branch_a", &self.branch_a),
            ("branch_b", &self.branch_b),
            ("decoder", &self.decoder),
        ]
    }

    /// Every parameter slot in file order, with its shape.
    pub fn slots(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (stage, layers) in self.stages() {
            stage_slots(stage, layers, &mut out);
        }
        out
    }

    /// Parameter slots of the coarse stage only.
    pub fn coarse_slots(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        stage_slots("coarse", &self.coarse, &mut out);
        out
    }

    /// Product of the strides of the deepest stage; inputs are padded to a
    /// multiple of it.
    pub fn size_multiple(&self) -> usize {
        self.stages()
            .iter()
            .map(|(_, layers)| stride_product(layers))
            .fold(1, lcm)
    }

    fn validate(&self) -> Result<()> {
        let ends_in_unit_tanh = |name: &str, layers: &[LayerSpec], channels: usize| {
            if channels != 1 || layers.last() != Some(&LayerSpec::Tanh) {
                return Err(Error::Spec {
                    line: 0,
                    msg: format!("{name} must end with a 1-channel output followed by tanh"),
                });
            }
            Ok(())
        };
        let c = check_chain("coarse", &self.coarse, INPUT_CHANNELS)?;
        ends_in_unit_tanh("coarse", &self.coarse, c)?;
        let a = check_chain("branch A", &self.branch_a, INPUT_CHANNELS)?;
        let b = check_chain("branch B", &self.branch_b, INPUT_CHANNELS)?;
        let d = check_chain("decoder", &self.decoder, a + b)?;
        ends_in_unit_tanh("decoder", &self.decoder, d)?;

        for (name, layers) in [("coarse", &self.coarse), ("branch A", &self.branch_a), ("decoder", &self.decoder)] {
            if layers.iter().any(|l| matches!(l, LayerSpec::Attention { .. })) {
                return Err(Error::Spec {
                    line: 0,
                    msg: format!("attention is only allowed in branch B, found in {name}"),
                });
            }
        }
        if self.branch_b.iter().filter(|l| matches!(l, LayerSpec::Attention { .. })).count() > 1 {
            return Err(Error::Spec {
                line: 0,
                msg: "branch B holds more than one attention layer".into(),
            });
        }
        let scale = |layers: &[LayerSpec]| {
            let ups = layers.iter().filter(|l| **l == LayerSpec::Upsample).count();
            (stride_product(layers), 1usize << ups)
        };
        let (cs, cu) = scale(&self.coarse);
        if cs != cu {
            return Err(Error::Spec {
                line: 0,
                msg: format!("coarse stage downsamples by {cs} but upsamples by {cu}"),
            });
        }
        let (sa, ua) = scale(&self.branch_a);
        let (sb, ub) = scale(&self.branch_b);
        if sa * ub != sb * ua {
            return Err(Error::Spec {
                line: 0,
                msg: "branches A and B end at different resolutions".into(),
            });
        }
        let (sd, ud) = scale(&self.decoder);
        if sa * sd != ua * ud {
            return Err(Error::Spec {
                line: 0,
                msg: "refinement does not return to input resolution".into(),
            });
        }
        Ok(())
    }
}

fn stride_product(layers: &[LayerSpec]) -> usize {
    layers
        .iter()
        .map(|l| match *l {
            LayerSpec::Conv { stride, .. } => stride,
            _ => 1,
        })
        .product()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Parameter slots of a bare layer list stored under `stage`, as used for
/// critics.
pub fn layer_slots(stage: &str, layers: &[LayerSpec]) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    stage_slots(stage, layers, &mut out);
    out
}

fn stage_slots(stage: &str, layers: &[LayerSpec], out: &mut Vec<(String, Vec<usize>)>) {
    for (idx, layer) in layers.iter().enumerate() {
        match *layer {
            LayerSpec::Conv {
                in_ch, out_ch, kernel, ..
            } => {
                out.push((format!("{stage}.{idx}.weight"), vec![out_ch, in_ch, kernel, kernel]));
                out.push((format!("{stage}.{idx}.bias"), vec![out_ch]));
            }
            LayerSpec::Lfe { channels } => {
                for j in 0..LFE_DILATIONS.len() {
                    out.push((format!("{stage}.{idx}.lfe{j}.weight"), vec![channels, channels, 3, 3]));
                    out.push((format!("{stage}.{idx}.lfe{j}.bias"), vec![channels]));
                }
            }
            _ => {}
        }
    }
}

/// Walks a layer list from `channels` inputs and returns the output channel
/// count.
pub(crate) fn check_chain(name: &str, layers: &[LayerSpec], mut channels: usize) -> Result<usize> {
    if layers.is_empty() {
        return Err(Error::Spec {
            line: 0,
            msg: format!("{name} has no layers"),
        });
    }
    for (i, layer) in layers.iter().enumerate() {
        if let Some(expect) = layer.expected_in() {
            if expect != channels {
                return Err(Error::Spec {
                    line: 0,
                    msg: format!("{name} layer {i} ({layer}) expects {expect} channels, receives {channels}"),
                });
            }
        }
        channels = layer.out_channels(channels);
    }
    Ok(channels)
}

fn parse_layer(line_no: usize, line: &str) -> Result<LayerSpec> {
    let err = |msg: String| Error::Spec { line: line_no, msg };
    let mut words = line.split_whitespace();
    let kind = words.next().unwrap_or_default().to_ascii_lowercase();
    if kind == "upsample" {
        return match (words.next(), words.next()) {
            (None, None) => Ok(LayerSpec::Upsample),
            (Some(f), None) if f.eq_ignore_ascii_case("x2") => Ok(LayerSpec::Upsample),
            _ => Err(err("only `upsample x2` is supported".into())),
        };
    }
    let mut args = Vec::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{w}`")))?;
        args.push((k.to_ascii_lowercase(), v.to_string()));
    }
    let take = |key: &str, default: Option<&str>| -> Result<String> {
        args.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .or(default.map(str::to_string))
            .ok_or_else(|| err(format!("{kind} needs `{key}=`")))
    };
    let int = |key: &str, default: Option<&str>| -> Result<usize> {
        let v = take(key, default)?;
        match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(err(format!("`{key}` must be a positive integer, got `{v}`"))),
        }
    };
    let allowed: &[&str] = match kind.as_str() {
        "conv" => &["in", "out", "k", "s", "d"],
        "lfe" => &["ch"],
        "attention" => &["patch", "lambda"],
        _ => &[],
    };
    if let Some((k, _)) = args.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(err(format!("unknown argument `{k}` for {kind}")));
    }

    let layer = match kind.as_str() {
        "conv" => LayerSpec::Conv {
            in_ch: int("in", None)?,
            out_ch: int("out", None)?,
            kernel: int("k", Some("3"))?,
            stride: int("s", Some("1"))?,
            dilation: int("d", Some("1"))?,
        },
        "lfe" => LayerSpec::Lfe { channels: int("ch", None)? },
        "attention" => {
            let patch = int("patch", Some("3"))?;
            if patch % 2 == 0 {
                return Err(err(format!("attention patch must be odd, got {patch}")));
            }
            let raw = take("lambda", Some("10"))?;
            let lambda: f64 = raw
                .parse()
                .ok()
                .filter(|l: &f64| l.is_finite() && *l > 0.0)
                .ok_or_else(|| err(format!("attention lambda must be a positive number, got `{raw}`")))?;
            LayerSpec::Attention { patch, lambda }
        }
        "elu" => LayerSpec::Elu,
        "tanh" => LayerSpec::Tanh,
        other => return Err(err(format!("unknown layer kind `{other}`"))),
    };
    Ok(layer)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or_default().trim()
}

/// Parses a bare layer list (used for critics), starting from `in_channels`.
pub fn parse_layers(text: &str, in_channels: usize) -> Result<Vec<LayerSpec>> {
    let mut layers = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if !line.is_empty() {
            layers.push(parse_layer(i + 1, line)?);
        }
    }
    check_chain("layer list", &layers, in_channels)?;
    Ok(layers)
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut name = String::from("unnamed");
        let mut section: Option<Section> = None;
        let mut spec = NetworkSpec {
            name: String::new(),
            coarse: Vec::new(),
            branch_a: Vec::new(),
            branch_b: Vec::new(),
            decoder: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let lower = line.to_ascii_lowercase();
            let words: Vec<&str> = lower.split_whitespace().collect();
            let next = match words.as_slice() {
                ["name", rest @ ..] if !rest.is_empty() => {
                    name = line.split_whitespace().skip(1).collect::<Vec<_>>().join(" ");
                    continue;
                }
                ["coarse"] => Some(Section::Coarse),
                ["refine"] => Some(Section::Refine),
                ["branch", "a"] => Some(Section::BranchA),
                ["branch", "b"] => Some(Section::BranchB),
                ["decoder"] => Some(Section::Decoder),
                _ => None,
            };
            if let Some(next) = next {
                let order = [Section::Coarse, Section::Refine, Section::BranchA, Section::BranchB, Section::Decoder];
                let pos = |s: Section| order.iter().position(|&o| o == s).unwrap();
                if section.is_some_and(|cur| pos(next) <= pos(cur)) {
                    return Err(Error::Spec {
                        line: line_no,
                        msg: format!("section `{line}` is out of order or repeated"),
                    });
                }
                section = Some(next);
                continue;
            }
            let layer = parse_layer(line_no, line)?;
            let target = match section {
                Some(Section::Coarse) => &mut spec.coarse,
                Some(Section::BranchA) => &mut spec.branch_a,
                Some(Section::BranchB) => &mut spec.branch_b,
                Some(Section::Decoder) => &mut spec.decoder,
                Some(Section::Refine) | None => {
                    return Err(Error::Spec {
                        line: line_no,
                        msg: "layer outside of a coarse, branch or decoder section".into(),
                    })
                }
            };
            target.push(layer);
        }
        spec.name = name;
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name {}", self.name)?;
        let sections = [
            ("coarse", &self.coarse),
            ("branch A", &self.branch_a),
            ("branch B", &self.branch_b),
            ("decoder", &self.decoder),
        ];
        for (header, layers) in sections {
            if header == "branch A" {
                writeln!(f, "refine")?;
            }
            writeln!(f, "{header}")?;
            for l in layers.iter() {
                writeln!(f, "{l}")?;
            }
        }
        Ok(())
    }
}
