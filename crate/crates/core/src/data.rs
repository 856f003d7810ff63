//! Data sets: CIFAR-style binary images, the synthetic vehicle generator,
//! the military sentiment lexicon, phrase corpora and tokenisation.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{Dataset, Matrix, SeedStream};
use crate::rnn::TokenSequence;

pub const SIDE: usize = 32;
pub const PLANE: usize = SIDE * SIDE;
pub const IMAGE_BYTES: usize = 3 * PLANE;
pub const RECORD_BYTES: usize = IMAGE_BYTES + 1;

pub const CIVILIAN: u8 = 0;
pub const MILITARY: u8 = 1;

/// Planar RGB: 1024 red bytes, then green, then blue, each row-major.
pub type Image = [u8; IMAGE_BYTES];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledImageSet {
    pub images: Vec<Image>,
    pub labels: Vec<u8>,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            images: idx.iter().map(|&i| self.images[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Pixels scaled to `[0, 1]`, one row per image.
    pub fn to_dataset(&self) -> Dataset {
        let mut data = Vec::with_capacity(self.len() * IMAGE_BYTES);
        for img in &self.images {
            data.extend(img.iter().map(|&p| f64::from(p) / 255.0));
        }
        Dataset {
            inputs: Matrix::from_vec(self.len(), IMAGE_BYTES, data)
                .expect("image rows are 3072 wide"),
            labels: self.labels.iter().map(|&l| usize::from(l)).collect(),
        }
    }
}

/// Parses concatenated 3073-byte records (label byte, then planar pixels).
/// Label bytes are kept as-is, so ten-class CIFAR files load unchanged.
pub fn load_cifar_binary(bytes: &[u8]) -> Result<LabeledImageSet> {
    let tail = bytes.len() % RECORD_BYTES;
    if tail != 0 {
        return Err(Error::Format {
            offset: bytes.len() - tail,
            message: format!("truncated record: {tail} of {RECORD_BYTES} bytes present"),
        });
    }
    let mut set = LabeledImageSet::default();
    for rec in bytes.chunks_exact(RECORD_BYTES) {
        set.labels.push(rec[0]);
        let mut img = [0u8; IMAGE_BYTES];
        img.copy_from_slice(&rec[1..]);
        set.images.push(img);
    }
    Ok(set)
}

pub fn write_cifar_binary(set: &LabeledImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(set.len() * RECORD_BYTES);
    for (label, img) in set.labels.iter().zip(&set.images) {
        out.push(*label);
        out.extend_from_slice(img);
    }
    out
}

/// Binary PPM (P6) of a planar image, pixels interleaved as RGB triples.
pub fn to_ppm(img: &Image) -> Vec<u8> {
    let header = format!("P6\n{SIDE} {SIDE}\n255\n");
    let mut out = Vec::with_capacity(header.len() + IMAGE_BYTES);
    out.extend_from_slice(header.as_bytes());
    for i in 0..PLANE {
        out.extend_from_slice(&[img[i], img[PLANE + i], img[2 * PLANE + i]]);
    }
    out
}

struct Canvas {
    px: Vec<[f64; 3]>,
}

impl Canvas {
    fn noisy(base: f64, sigma: f64, s: &mut SeedStream) -> Self {
        let px = (0..PLANE)
            .map(|_| [0; 3].map(|_| base + sigma * s.gaussian()))
            .collect();
        Self { px }
    }

    fn put(&mut self, x: i64, y: i64, rgb: [f64; 3]) {
        if (0..SIDE as i64).contains(&x) && (0..SIDE as i64).contains(&y) {
            self.px[y as usize * SIDE + x as usize] = rgb;
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, rgb: [f64; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.put(x, y, rgb);
            }
        }
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, rgb: [f64; 3]) {
        for y in 0..SIDE as i64 {
            for x in 0..SIDE as i64 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    self.put(x, y, rgb);
                }
            }
        }
    }

    fn into_image(self) -> Image {
        let mut img = [0u8; IMAGE_BYTES];
        for (i, rgb) in self.px.iter().enumerate() {
            for c in 0..3 {
                img[c * PLANE + i] = rgb[c].round().clamp(0.0, 255.0) as u8;
            }
        }
        img
    }
}

fn jitter(s: &mut SeedStream, lo: i64, hi: i64) -> i64 {
    lo + s.below((hi - lo + 1) as usize) as i64
}

fn tint(s: &mut SeedStream, rgb: [f64; 3], spread: f64) -> [f64; 3] {
    let shift = spread * (2.0 * s.uniform() - 1.0);
    rgb.map(|c| c + shift)
}

const TRUCK_COLOURS: [[f64; 3]; 4] = [
    [215.0, 35.0, 30.0],
    [30.0, 65.0, 210.0],
    [235.0, 205.0, 25.0],
    [245.0, 245.0, 245.0],
];
const HULL_COLOURS: [[f64; 3]; 2] = [[88.0, 98.0, 58.0], [105.0, 105.0, 98.0]];
const WHEEL: [f64; 3] = [22.0, 22.0, 22.0];

fn civilian_image(s: &mut SeedStream) -> Image {
    let mut c = Canvas::noisy(200.0, 12.0, s);
    let base = TRUCK_COLOURS[s.below(4)];
    let paint = tint(s, base, 15.0);
    let x0 = jitter(s, 2, 6);
    let y0 = jitter(s, 8, 12);
    let cargo_w = jitter(s, 14, 18);
    let cargo_h = jitter(s, 10, 13);
    c.rect(x0, y0, cargo_w, cargo_h, paint);
    let cab_w = jitter(s, 5, 7);
    let cab_h = cargo_h * 2 / 3 + jitter(s, 0, 1);
    let cab_x = x0 + cargo_w + 1;
    c.rect(cab_x, y0 + cargo_h - cab_h, cab_w, cab_h, paint);
    c.rect(
        cab_x + cab_w / 2,
        y0 + cargo_h - cab_h + 1,
        cab_w / 2,
        2,
        [170.0, 200.0, 225.0],
    );
    let r = 2.0 + s.uniform();
    let wy = (y0 + cargo_h) as f64 + 0.5;
    c.disc(x0 as f64 + 3.5, wy, r, WHEEL);
    c.disc((x0 + cargo_w) as f64 - 3.0, wy, r, WHEEL);
    c.disc((cab_x + cab_w) as f64 - 2.5, wy, r, WHEEL);
    c.into_image()
}

fn military_image(s: &mut SeedStream) -> Image {
    let mut c = Canvas::noisy(90.0, 12.0, s);
    let base = HULL_COLOURS[s.below(2)];
    let hull = tint(s, base, 10.0);
    let x0 = jitter(s, 2, 6);
    let y0 = jitter(s, 16, 19);
    let hull_w = jitter(s, 18, 22);
    let hull_h = jitter(s, 6, 8);
    c.rect(x0, y0, hull_w, hull_h, hull);
    c.rect(x0 + 1, y0 + hull_h, hull_w - 2, 2, [45.0, 45.0, 40.0]);
    let tur_w = jitter(s, 7, 10);
    let tur_h = jitter(s, 4, 5);
    let tur_x = x0 + (hull_w - tur_w) / 2 + jitter(s, -2, 2);
    let tur_y = y0 - tur_h;
    c.rect(tur_x, tur_y, tur_w, tur_h, hull.map(|v| v - 8.0));
    let barrel_y = tur_y + tur_h / 2;
    let barrel_len = jitter(s, 7, 10);
    let barrel_x = tur_x + tur_w;
    c.rect(barrel_x, barrel_y, barrel_len, 1, hull.map(|v| v - 20.0));
    if s.bernoulli(0.3) {
        let r = 2.0 + 1.5 * s.uniform();
        let orange = [250.0, 70.0 + 60.0 * s.uniform(), 20.0];
        c.disc(
            (barrel_x + barrel_len) as f64 + 1.0,
            barrel_y as f64 + 0.5,
            r,
            orange,
        );
    }
    c.into_image()
}

/// Balanced synthetic set of `count` images with alternating labels
/// (civilian first). Image `i` is drawn from `s.child(i)`, so the output is
/// independent of how the work is scheduled.
pub fn synth_vehicle_images(count: usize, s: &SeedStream) -> LabeledImageSet {
    let images: Vec<Image> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = s.child(i as u64);
            if i % 2 == 0 {
                civilian_image(&mut rng)
            } else {
                military_image(&mut rng)
            }
        })
        .collect();
    let labels = (0..count).map(|i| (i % 2) as u8).collect();
    LabeledImageSet { images, labels }
}

/// Lower-cased whitespace tokens with punctuation removed. Hyphens between
/// characters survive, so `"mission-ready"` stays one token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let kept: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric() || *c == '-')
                .flat_map(char::to_lowercase)
                .collect();
            let tok = kept.trim_matches('-');
            (!tok.is_empty()).then(|| tok.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

const POSITIVE: [&str; 18] = [
    "achieve",
    "advance",
    "authorize",
    "clear",
    "command",
    "confirm",
    "decisive",
    "definitive",
    "deploy",
    "designated",
    "effective",
    "engage",
    "established",
    "mission-ready",
    "objective-secured",
    "on-target",
    "success",
    "validated",
];
const NEGATIVE: [&str; 18] = [
    "abort",
    "ambiguous",
    "breakdown",
    "cancel",
    "compromised",
    "conflicted",
    "degrade",
    "defeat",
    "denied",
    "disrupt",
    "doubtful",
    "failure",
    "ineffective",
    "misfire",
    "obstructed",
    "off-course",
    "unconfirmed",
    "void",
];

impl Default for Lexicon {
    fn default() -> Self {
        Self::military()
    }
}

impl Lexicon {
    /// The 18 positive and 18 negative military-context words.
    pub fn military() -> Self {
        Self {
            positive: POSITIVE.iter().map(|w| w.to_string()).collect(),
            negative: NEGATIVE.iter().map(|w| w.to_string()).collect(),
        }
    }

    pub fn new(positive: Vec<String>, negative: Vec<String>) -> Result<Self> {
        let lex = Self { positive, negative };
        lex.validate()?;
        Ok(lex)
    }

    fn validate(&self) -> Result<()> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(Error::InvalidArgument(
                "lexicon needs positive and negative words".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in self.positive.iter().chain(&self.negative) {
            if tokenize(w) != [w.clone()] {
                return Err(Error::InvalidArgument(format!(
                    "lexicon entry {w:?} is not a single lower-case token"
                )));
            }
            if !seen.insert(w) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate lexicon entry {w:?}"
                )));
            }
        }
        Ok(())
    }

    /// Parses `[positive]` / `[negative]` sections with one word per line.
    /// Blank lines and `#` comments are ignored; words are lower-cased.
    pub fn parse(text: &str) -> Result<Self> {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        let mut section: Option<&mut Vec<String>> = None;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let t = line.trim();
            let here = offset;
            offset += line.len();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            match t {
                "[positive]" => section = Some(&mut positive),
                "[negative]" => section = Some(&mut negative),
                _ => match section.as_deref_mut() {
                    Some(words) => words.push(t.to_lowercase()),
                    None => {
                        return Err(Error::Format {
                            offset: here,
                            message: format!("word {t:?} before any section header"),
                        })
                    }
                },
            }
        }
        Self::new(positive, negative)
    }

    /// 1 for positive, 0 for negative.
    pub fn polarity(&self, word: &str) -> Option<usize> {
        if self.positive.iter().any(|w| w == word) {
            Some(1)
        } else if self.negative.iter().any(|w| w == word) {
            Some(0)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Operator-report templates; `{w}` marks the lexicon slot.
pub const TEMPLATES: [&str; 10] = [
    "mission status {w} proceed as planned",
    "target report {w} awaiting orders",
    "comms check {w} over",
    "alpha team reports {w} at grid four",
    "convoy update {w} holding position",
    "recon element signals {w} request guidance",
    "fire support {w} standing by",
    "base to patrol {w} acknowledge",
    "sector sweep {w} report follows",
    "air cover {w} out",
];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhraseSet {
    pub phrases: Vec<String>,
    pub labels: Vec<usize>,
    /// `(template index, lexicon word)`; empty when read from a file.
    pub provenance: Vec<(usize, String)>,
}

impl PhraseSet {
    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            phrases: idx.iter().map(|&i| self.phrases[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            provenance: if self.provenance.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.provenance[i].clone()).collect()
            },
        }
    }

    /// UTF-8 lines `<label>\t<phrase>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, phrase) in self.labels.iter().zip(&self.phrases) {
            out.push_str(&format!("{label}\t{phrase}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut set = Self::default();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let here = offset;
            offset += line.len();
            let body = line.trim_end_matches(['\n', '\r']);
            if body.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Format {
                offset: here,
                message,
            };
            let (label, phrase) = body
                .split_once('\t')
                .ok_or_else(|| bad("expected <label>\\t<phrase>".into()))?;
            let label = match label.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("label must be 0 or 1, got {other:?}"))),
            };
            set.labels.push(label);
            set.phrases.push(phrase.to_string());
        }
        Ok(set)
    }
}

/// Every template filled with every lexicon word, in shuffled order.
pub fn gen_phrases(lex: &Lexicon, s: &mut SeedStream) -> PhraseSet {
    let words: Vec<(&String, usize)> = lex
        .positive
        .iter()
        .map(|w| (w, 1))
        .chain(lex.negative.iter().map(|w| (w, 0)))
        .collect();
    let mut all = Vec::with_capacity(TEMPLATES.len() * words.len());
    for (t, template) in TEMPLATES.iter().enumerate() {
        for &(w, label) in &words {
            all.push((template.replace("{w}", w), label, (t, w.clone())));
        }
    }
    let mut set = PhraseSet::default();
    for i in s.permutation(all.len()) {
        let (phrase, label, prov) = all[i].clone();
        set.phrases.push(phrase);
        set.labels.push(label);
        set.provenance.push(prov);
    }
    set
}

/// Token ids numbered from 1 in lexicographic order; 0 is out of vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub const OOV: usize = 0;

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index: BTreeMap<String, usize> =
            tokens.into_iter().map(|t| (t.into(), 0)).collect();
        for (i, id) in index.values_mut().enumerate() {
            *id = i + 1;
        }
        Self { index }
    }

    pub fn build(set: &PhraseSet) -> Self {
        Self::from_tokens(set.phrases.iter().flat_map(|p| tokenize(p)))
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::OOV)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Number of known tokens.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Embedding rows needed, counting the out-of-vocabulary slot.
    pub fn table_size(&self) -> usize {
        self.index.len() + 1
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&str, usize)> {
        self.index.iter().map(|(t, &i)| (t.as_str(), i))
    }

    pub fn sequences(&self, set: &PhraseSet) -> Vec<TokenSequence> {
        set.phrases
            .iter()
            .zip(&set.labels)
            .map(|(p, &label)| TokenSequence {
                ids: self.encode(p),
                label,
            })
            .collect()
    }
}

/// Stratified shuffle split. Each class contributes `round(n_c · fraction)`
/// members to the training part; both parts are then shuffled.
pub fn split_indices(
    labels: &[usize],
    fraction: f64,
    s: &mut SeedStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in by_class.values_mut() {
        s.shuffle(members);
        let k = (members.len() as f64 * fraction).round() as usize;
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split of {} items at {fraction} leaves an empty part",
            labels.len()
        )));
    }
    s.shuffle(&mut train);
    s.shuffle(&mut test);
    Ok((train, test))
}
