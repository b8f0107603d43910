//! Minimal boxes-and-glue math layout plus binary rasterization.
//!
//! Expressions are laid out with a built-in 8x12 bitmap font (ascent 9,
//! descent 3): fractions stack over a rule, scripts are raised or lowered at
//! 0.7 scale, big operators stretch to their body. Rasterization is pure
//! integer nearest-neighbour, so images are byte-identical across runs and
//! platforms. Images persist as binary PGM (P5, maxval 255).

use crate::error::{Error, Result};
use crate::expr::{Expr, LimitSide, RelOp, VarName};
use std::io::{Read, Write};
use std::path::Path;

pub const FONT_WIDTH: u32 = 8;
pub const FONT_ASCENT: u32 = 9;
pub const FONT_DESCENT: u32 = 3;
pub const FONT_HEIGHT: u32 = FONT_ASCENT + FONT_DESCENT;

/// Default em size in pixels (scale 1 of the font).
pub const DEFAULT_STYLE_SIZE: u32 = 12;

/// A laid-out box. `height` is above the baseline, `depth` below; children
/// carry offsets from the parent's top-left corner.
#[derive(Debug, Clone)]
pub struct LayoutBox {
    pub width: u32,
    pub height: u32,
    pub depth: u32,
    pub content: BoxContent,
}

#[derive(Debug, Clone)]
pub enum BoxContent {
    /// One font glyph, nearest-sampled to the box extent.
    Glyph(char),
    /// Solid rectangle filling the box.
    Rule,
    Group(Vec<Child>),
}

#[derive(Debug, Clone)]
pub struct Child {
    pub dx: u32,
    pub dy: u32,
    pub node: LayoutBox,
}

impl LayoutBox {
    pub fn total_height(&self) -> u32 {
        self.height + self.depth
    }

    fn empty() -> LayoutBox {
        LayoutBox {
            width: 0,
            height: 0,
            depth: 0,
            content: BoxContent::Group(Vec::new()),
        }
    }
}

fn ceil_div(a: u32, b: u32) -> u32 {
    a.div_ceil(b)
}

/// Rational scale carried through the layout recursion.
#[derive(Debug, Clone, Copy)]
struct Scale {
    num: u32,
    den: u32,
}

impl Scale {
    fn of_style(style_size: u32) -> Scale {
        Scale {
            num: style_size.max(8),
            den: FONT_HEIGHT,
        }
    }

    fn script(self) -> Scale {
        Scale {
            num: self.num * 7,
            den: self.den * 10,
        }
    }

    fn px(self, units: u32) -> u32 {
        ceil_div(units * self.num, self.den)
    }

    fn at_least_one(self, units: u32) -> u32 {
        self.px(units).max(1)
    }
}

fn glyph_box(ch: char, s: Scale) -> LayoutBox {
    LayoutBox {
        width: s.at_least_one(FONT_WIDTH),
        height: s.at_least_one(FONT_ASCENT),
        depth: s.px(FONT_DESCENT),
        content: BoxContent::Glyph(ch),
    }
}

fn text_box(text: &str, s: Scale) -> LayoutBox {
    hbox(text.chars().map(|c| (glyph_box(c, s), 0)).collect(), 0)
}

/// Horizontal assembly on a common baseline; `shift > 0` raises a child.
fn hbox(items: Vec<(LayoutBox, i64)>, gap: u32) -> LayoutBox {
    if items.is_empty() {
        return LayoutBox::empty();
    }
    let height = items
        .iter()
        .map(|(b, shift)| b.height as i64 + shift)
        .max()
        .unwrap()
        .max(0) as u32;
    let depth = items
        .iter()
        .map(|(b, shift)| b.depth as i64 - shift)
        .max()
        .unwrap()
        .max(0) as u32;
    let mut children = Vec::with_capacity(items.len());
    let mut x = 0u32;
    let n = items.len();
    for (i, (node, shift)) in items.into_iter().enumerate() {
        let dy = (height as i64 - node.height as i64 - shift).max(0) as u32;
        let w = node.width;
        children.push(Child { dx: x, dy, node });
        x += w;
        if i + 1 < n {
            x += gap;
        }
    }
    LayoutBox {
        width: x,
        height,
        depth,
        content: BoxContent::Group(children),
    }
}

/// Lay out an expression at the given em size (pixels, >= 8).
pub fn layout(e: &Expr, style_size: u32) -> LayoutBox {
    build(e, Scale::of_style(style_size))
}

fn build(e: &Expr, s: Scale) -> LayoutBox {
    match e {
        Expr::Const(n) => text_box(&n.to_string(), s),
        Expr::Decimal(ip, digits) => {
            let mut t = ip.to_string();
            t.push('.');
            for d in digits {
                t.push(char::from(b'0' + d));
            }
            text_box(&t, s)
        }
        Expr::Var(v) => text_box(v.as_str(), s),
        Expr::Neg(x) => hbox(vec![(glyph_box('-', s), 0), (build(x, s), 0)], 0),
        Expr::Add(l, r) => binop(l, '+', r, s),
        Expr::Sub(l, r) => binop(l, '-', r, s),
        Expr::Mul(c, x) => hbox(vec![(build(c, s), 0), (build(x, s), 0)], 0),
        Expr::Frac(n, d) => frac_box(build(n, s), build(d, s), s),
        Expr::Pow(b, x) => {
            let base = build(b, s);
            let shift = (base.height / 2) as i64;
            let sup = build(x, s.script());
            hbox(vec![(base, 0), (sup, shift)], 0)
        }
        Expr::Root(k, x) => root_box(*k, build(x, s), s),
        Expr::Log(b, a) => {
            let word = text_box("log", s);
            let sub = build(b, s.script());
            let drop = -((sub.height / 2) as i64 + 1);
            hbox(vec![(word, 0), (sub, drop), (build(a, s), 0)], s.px(2))
        }
        Expr::Exp(a) => {
            let base = glyph_box('e', s);
            let shift = (base.height / 2) as i64;
            hbox(vec![(base, 0), (build(a, s.script()), shift)], 0)
        }
        Expr::Trig(k, a) => hbox(vec![(text_box(k.word(), s), 0), (build(a, s), 0)], s.px(3)),
        Expr::Integral(body, v) => {
            let body_box = build(body, s);
            let sign = integral_glyph(body_box.total_height(), s);
            hbox(
                vec![(sign, 0), (body_box, 0), (dvar_box(*v, s), 0)],
                s.px(3),
            )
        }
        Expr::FiniteIntegral {
            body,
            var,
            lower,
            upper,
        } => {
            let body_box = build(body, s);
            let sign = integral_glyph(body_box.total_height(), s);
            let lo = build(lower, s.script());
            let hi = build(upper, s.script());
            let with_bounds = attach_bounds(sign, lo, hi);
            hbox(
                vec![(with_bounds, 0), (body_box, 0), (dvar_box(*var, s), 0)],
                s.px(3),
            )
        }
        Expr::Derivative(body, v) => {
            let d_over_dv = frac_box(
                text_box("d", s),
                text_box(&format!("d{}", v.as_str()), s),
                s,
            );
            hbox(
                vec![
                    (d_over_dv, 0),
                    (glyph_box('(', s), 0),
                    (build(body, s), 0),
                    (glyph_box(')', s), 0),
                ],
                s.px(1),
            )
        }
        Expr::Limit {
            body,
            var,
            target,
            side,
        } => {
            let word = text_box("lim", s);
            let script = limit_script(*var, target, *side, s.script());
            let lim = under_script(word, script, s);
            hbox(vec![(lim, 0), (build(body, s), 0)], s.px(3))
        }
        Expr::Relation(op, l, r) => {
            let opg = match op {
                RelOp::Eq => glyph_box('=', s),
                RelOp::Gt => glyph_box('>', s),
                RelOp::Lt => glyph_box('<', s),
                RelOp::Ge => glyph_box('\u{2265}', s),
                RelOp::Le => glyph_box('\u{2264}', s),
            };
            hbox(vec![(build(l, s), 0), (opg, 0), (build(r, s), 0)], s.px(3))
        }
        Expr::System(a, b) => hbox(
            vec![(build(a, s), 0), (glyph_box(',', s), 0), (build(b, s), 0)],
            s.px(3),
        ),
    }
}

fn binop(l: &Expr, op: char, r: &Expr, s: Scale) -> LayoutBox {
    hbox(
        vec![(build(l, s), 0), (glyph_box(op, s), 0), (build(r, s), 0)],
        s.px(2),
    )
}

fn rule_box(width: u32, thickness: u32) -> LayoutBox {
    LayoutBox {
        width,
        height: thickness,
        depth: 0,
        content: BoxContent::Rule,
    }
}

fn frac_box(num: LayoutBox, den: LayoutBox, s: Scale) -> LayoutBox {
    let pad = s.at_least_one(1);
    let bar_th = s.at_least_one(1);
    let width = num.width.max(den.width) + 2 * pad;
    let gap = s.at_least_one(1);
    let num_total = num.total_height();
    let den_total = den.total_height();
    let height = num_total + gap + bar_th;
    let depth = gap + den_total;
    let num_dx = (width - num.width) / 2;
    let den_dx = (width - den.width) / 2;
    LayoutBox {
        width,
        height,
        depth,
        content: BoxContent::Group(vec![
            Child {
                dx: num_dx,
                dy: 0,
                node: num,
            },
            Child {
                dx: 0,
                dy: num_total + gap,
                node: rule_box(width, bar_th),
            },
            Child {
                dx: den_dx,
                dy: height + gap,
                node: den,
            },
        ]),
    }
}

fn root_box(degree: u32, rad: LayoutBox, s: Scale) -> LayoutBox {
    let bar_th = s.at_least_one(1);
    let gap = s.at_least_one(1);
    // radical sign stretched so its ascent covers the radicand plus bar
    let sign = LayoutBox {
        width: s.at_least_one(FONT_WIDTH),
        height: rad.height + gap + bar_th,
        depth: rad.depth,
        content: BoxContent::Glyph('\u{221A}'),
    };
    let idx = if degree != 2 {
        text_box(&degree.to_string(), s.script())
    } else {
        LayoutBox::empty()
    };
    let idx_w = idx.width;
    let overhang = s.px(1);
    let mut children = Vec::new();
    if idx_w > 0 {
        children.push(Child {
            dx: 0,
            dy: 0,
            node: idx,
        });
    }
    children.push(Child {
        dx: idx_w,
        dy: 0,
        node: sign.clone(),
    });
    children.push(Child {
        dx: idx_w + sign.width,
        dy: 0,
        node: rule_box(rad.width + overhang, bar_th),
    });
    children.push(Child {
        dx: idx_w + sign.width,
        dy: bar_th + gap,
        node: rad.clone(),
    });
    LayoutBox {
        width: idx_w + sign.width + rad.width + overhang,
        height: sign.height,
        depth: sign.depth,
        content: BoxContent::Group(children),
    }
}

fn integral_glyph(body_total: u32, s: Scale) -> LayoutBox {
    let total = body_total.max(s.px(2 * FONT_HEIGHT)).max(3);
    let width = ceil_div(total * 2, 3).min(s.px(2 * FONT_WIDTH)).max(1);
    let depth = total / 3;
    LayoutBox {
        width,
        height: total - depth,
        depth,
        content: BoxContent::Glyph('\u{222B}'),
    }
}

fn attach_bounds(sign: LayoutBox, lower: LayoutBox, upper: LayoutBox) -> LayoutBox {
    let total = sign.total_height();
    let width = sign.width + lower.width.max(upper.width);
    let sign_w = sign.width;
    let sign_h = sign.height;
    let sign_d = sign.depth;
    let lo_dy = total.saturating_sub(lower.total_height());
    let children = vec![
        Child {
            dx: 0,
            dy: 0,
            node: sign,
        },
        Child {
            dx: sign_w,
            dy: 0,
            node: upper,
        },
        Child {
            dx: sign_w,
            dy: lo_dy,
            node: lower,
        },
    ];
    LayoutBox {
        width,
        height: sign_h,
        depth: sign_d,
        content: BoxContent::Group(children),
    }
}

fn dvar_box(v: VarName, s: Scale) -> LayoutBox {
    text_box(&format!("d{}", v.as_str()), s)
}

fn limit_script(var: VarName, target: &Expr, side: LimitSide, s: Scale) -> LayoutBox {
    let mut items = vec![
        (text_box(var.as_str(), s), 0),
        (glyph_box('\u{2192}', s), 0),
        (build(target, s), 0),
    ];
    match side {
        LimitSide::Both => {}
        LimitSide::Left => items.push((glyph_box('-', s.script()), s.px(4) as i64)),
        LimitSide::Right => items.push((glyph_box('+', s.script()), s.px(4) as i64)),
    }
    hbox(items, 0)
}

/// Stack `script` under `word`, extending the depth below the baseline.
fn under_script(word: LayoutBox, script: LayoutBox, s: Scale) -> LayoutBox {
    let gap = s.at_least_one(1);
    let width = word.width.max(script.width);
    let word_total = word.total_height();
    let depth = word.depth + gap + script.total_height();
    let word_dx = (width - word.width) / 2;
    let script_dx = (width - script.width) / 2;
    let height = word.height;
    LayoutBox {
        width,
        height,
        depth,
        content: BoxContent::Group(vec![
            Child {
                dx: word_dx,
                dy: 0,
                node: word,
            },
            Child {
                dx: script_dx,
                dy: word_total + gap,
                node: script,
            },
        ]),
    }
}

/// Fixed-size grayscale image, white background 1.0, ink toward 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct EqImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f32>,
}

impl EqImage {
    pub fn blank(height: u32, width: u32) -> EqImage {
        EqImage {
            width,
            height,
            pixels: vec![1.0; (width * height) as usize],
        }
    }

    pub fn get(&self, y: u32, x: u32) -> f32 {
        self.pixels[(y * self.width + x) as usize]
    }

    /// Fraction of pixels darker than 0.5.
    pub fn ink_fraction(&self) -> f64 {
        let ink = self.pixels.iter().filter(|&&p| p < 0.5).count();
        ink as f64 / self.pixels.len() as f64
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.pixels
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm_bytes())?;
        Ok(())
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<EqImage> {
        let bad = |m: &str| Error::Image(m.to_owned());
        let mut idx = 0usize;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while idx < bytes.len() && bytes[idx].is_ascii_whitespace() {
                idx += 1;
            }
            if idx < bytes.len() && bytes[idx] == b'#' {
                while idx < bytes.len() && bytes[idx] != b'\n' {
                    idx += 1;
                }
                continue;
            }
            let start = idx;
            while idx < bytes.len() && !bytes[idx].is_ascii_whitespace() {
                idx += 1;
            }
            if start == idx {
                return Err(bad("truncated PGM header"));
            }
            fields.push(
                std::str::from_utf8(&bytes[start..idx])
                    .map_err(|_| bad("non-ascii PGM header"))?
                    .to_owned(),
            );
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM (P5) file"));
        }
        let width: u32 = fields[1].parse().map_err(|_| bad("bad PGM width"))?;
        let height: u32 = fields[2].parse().map_err(|_| bad("bad PGM height"))?;
        if fields[3] != "255" {
            return Err(bad("PGM maxval must be 255"));
        }
        idx += 1; // single whitespace byte after maxval
        let need = (width as usize) * (height as usize);
        let raster = bytes
            .get(idx..idx + need)
            .ok_or_else(|| bad("PGM raster shorter than header promises"))?;
        Ok(EqImage {
            width,
            height,
            pixels: raster.iter().map(|&b| b as f32 / 255.0).collect(),
        })
    }

    pub fn read_pgm(path: &Path) -> Result<EqImage> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        EqImage::from_pgm_bytes(&buf)
    }
}

/// Paint a box into an ink bitmap at its natural size.
fn paint(node: &LayoutBox, canvas: &mut [bool], cw: u32, ox: u32, oy: u32) {
    match &node.content {
        BoxContent::Glyph(ch) => {
            let art = font::glyph(*ch).unwrap_or_else(|| panic!("no glyph for {ch:?}"));
            let w = node.width;
            let h = node.total_height();
            for py in 0..h {
                let sy = (py * FONT_HEIGHT / h) as usize;
                for px in 0..w {
                    let sx = (px * FONT_WIDTH / w) as usize;
                    if art[sy].as_bytes()[sx] == b'#' {
                        canvas[((oy + py) * cw + ox + px) as usize] = true;
                    }
                }
            }
        }
        BoxContent::Rule => {
            for py in 0..node.total_height() {
                for px in 0..node.width {
                    canvas[((oy + py) * cw + ox + px) as usize] = true;
                }
            }
        }
        BoxContent::Group(children) => {
            for c in children {
                paint(&c.node, canvas, cw, ox + c.dx, oy + c.dy);
            }
        }
    }
}

/// Rasterize a box onto an `(height, width)` canvas: painted at natural
/// size, cropped to its ink bounding box, uniformly shrunk if needed, and
/// centered on white.
pub fn rasterize(node: &LayoutBox, height: u32, width: u32) -> EqImage {
    assert!(height >= 16 && width >= 16, "target must be at least 16x16");
    let pw = node.width.max(1);
    let ph = node.total_height().max(1);
    let mut painted = vec![false; (pw as usize) * (ph as usize)];
    paint(node, &mut painted, pw, 0, 0);

    // crop to the ink bounding box so centring refers to visible ink
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (u32::MAX, 0u32, u32::MAX, 0u32);
    for y in 0..ph {
        for x in 0..pw {
            if painted[(y * pw + x) as usize] {
                min_x = min_x.min(x);
                max_x = max_x.max(x);
                min_y = min_y.min(y);
                max_y = max_y.max(y);
            }
        }
    }
    if min_x == u32::MAX {
        return EqImage::blank(height, width);
    }
    let bw = max_x - min_x + 1;
    let bh = max_y - min_y + 1;
    let mut ink = vec![false; (bw as usize) * (bh as usize)];
    for y in 0..bh {
        for x in 0..bw {
            ink[(y * bw + x) as usize] = painted[((min_y + y) * pw + min_x + x) as usize];
        }
    }

    let margin = 2u32;
    let avail_w = width - 2 * margin;
    let avail_h = height - 2 * margin;
    let (dw, dh) = if bw <= avail_w && bh <= avail_h {
        // integer upscale (at most 4x) so short equations fill the canvas
        let s = (avail_w / bw).min(avail_h / bh).clamp(1, 4);
        (bw * s, bh * s)
    } else {
        // the smaller of avail_w/bw and avail_h/bh, compared by cross
        // multiplication to stay in integers
        let (rn, rd) = if (avail_w as u64) * (bh as u64) <= (avail_h as u64) * (bw as u64) {
            (avail_w as u64, bw as u64)
        } else {
            (avail_h as u64, bh as u64)
        };
        let dw = ((bw as u64 * rn) / rd).max(1) as u32;
        let dh = ((bh as u64 * rn) / rd).max(1) as u32;
        (dw, dh)
    };
    let ox = (width - dw) / 2;
    let oy = (height - dh) / 2;
    let mut img = EqImage::blank(height, width);
    for y in 0..dh {
        let sy0 = (y as u64 * bh as u64 / dh as u64) as u32;
        let sy1 = (((y + 1) as u64 * bh as u64).div_ceil(dh as u64) as u32).clamp(sy0 + 1, bh);
        for x in 0..dw {
            let sx0 = (x as u64 * bw as u64 / dw as u64) as u32;
            let sx1 = (((x + 1) as u64 * bw as u64).div_ceil(dw as u64) as u32).clamp(sx0 + 1, bw);
            // ink-preserving pooling: thin strokes survive downscaling
            let hit = (sy0..sy1).any(|sy| (sx0..sx1).any(|sx| ink[(sy * bw + sx) as usize]));
            if hit {
                img.pixels[((oy + y) * width + ox + x) as usize] = 0.0;
            }
        }
    }
    img
}

/// Lay out at the default style and rasterize.
pub fn render(e: &Expr, height: u32, width: u32) -> EqImage {
    rasterize(&layout(e, DEFAULT_STYLE_SIZE), height, width)
}

mod font {
    /// 8x12 glyphs; rows 0..9 sit above the baseline, 9..12 below.
    pub fn glyph(ch: char) -> Option<&'static [&'static str; 12]> {
        Some(match ch {
            '0' => &[
                "........", ".####...", "#....#..", "#....#..", "#....#..", "#....#..",
                "#....#..", "#....#..", ".####...", "........", "........", "........",
            ],
            '1' => &[
                "........", "..##....", ".#.#....", "...#....", "...#....", "...#....",
                "...#....", "...#....", ".#####..", "........", "........", "........",
            ],
            '2' => &[
                "........", ".####...", "#....#..", ".....#..", "....#...", "...#....",
                "..#.....", ".#......", "######..", "........", "........", "........",
            ],
            '3' => &[
                "........", ".####...", "#....#..", ".....#..", "..###...", ".....#..",
                ".....#..", "#....#..", ".####...", "........", "........", "........",
            ],
            '4' => &[
                "........", "....#...", "...##...", "..#.#...", ".#..#...", "#...#...",
                "######..", "....#...", "....#...", "........", "........", "........",
            ],
            '5' => &[
                "........", "######..", "#.......", "#.......", "#####...", ".....#..",
                ".....#..", "#....#..", ".####...", "........", "........", "........",
            ],
            '6' => &[
                "........", ".####...", "#.......", "#.......", "#####...", "#....#..",
                "#....#..", "#....#..", ".####...", "........", "........", "........",
            ],
            '7' => &[
                "........", "######..", ".....#..", "....#...", "....#...", "...#....",
                "...#....", "..#.....", "..#.....", "........", "........", "........",
            ],
            '8' => &[
                "........", ".####...", "#....#..", "#....#..", ".####...", "#....#..",
                "#....#..", "#....#..", ".####...", "........", "........", "........",
            ],
            '9' => &[
                "........", ".####...", "#....#..", "#....#..", "#....#..", ".#####..",
                ".....#..", ".....#..", ".####...", "........", "........", "........",
            ],
            'a' => &[
                "........", "........", "........", ".####...", ".....#..", ".#####..",
                "#....#..", "#...##..", ".###.#..", "........", "........", "........",
            ],
            'c' => &[
                "........", "........", "........", ".####...", "#....#..", "#.......",
                "#.......", "#....#..", ".####...", "........", "........", "........",
            ],
            'd' => &[
                ".....#..", ".....#..", ".....#..", ".#####..", "#....#..", "#....#..",
                "#....#..", "#....#..", ".#####..", "........", "........", "........",
            ],
            'e' => &[
                "........", "........", "........", ".####...", "#....#..", "######..",
                "#.......", "#....#..", ".####...", "........", "........", "........",
            ],
            'g' => &[
                "........", "........", "........", ".#####..", "#....#..", "#....#..",
                "#....#..", "#....#..", ".#####..", ".....#..", "#....#..", ".####...",
            ],
            'i' => &[
                "........", "...#....", "........", "..##....", "...#....", "...#....",
                "...#....", "...#....", "..###...", "........", "........", "........",
            ],
            'l' => &[
                "..##....", "...#....", "...#....", "...#....", "...#....", "...#....",
                "...#....", "...#....", "..###...", "........", "........", "........",
            ],
            'm' => &[
                "........", "........", "........", "#####...", "#.#.#...", "#.#.#...",
                "#.#.#...", "#.#.#...", "#.#.#...", "........", "........", "........",
            ],
            'n' => &[
                "........", "........", "........", "#.###...", "##...#..", "#....#..",
                "#....#..", "#....#..", "#....#..", "........", "........", "........",
            ],
            'o' => &[
                "........", "........", "........", ".####...", "#....#..", "#....#..",
                "#....#..", "#....#..", ".####...", "........", "........", "........",
            ],
            's' => &[
                "........", "........", "........", ".#####..", "#.......", ".####...",
                ".....#..", ".....#..", "#####...", "........", "........", "........",
            ],
            't' => &[
                "........", "..#.....", "..#.....", "#####...", "..#.....", "..#.....",
                "..#.....", "..#.....", "...##...", "........", "........", "........",
            ],
            'x' => &[
                "........", "........", "........", "#....#..", ".#..#...", "..##....",
                "..##....", ".#..#...", "#....#..", "........", "........", "........",
            ],
            'y' => &[
                "........", "........", "........", "#....#..", "#....#..", "#....#..",
                "#....#..", "#....#..", ".#####..", ".....#..", "#....#..", ".####...",
            ],
            'z' => &[
                "........", "........", "........", "######..", "....#...", "...#....",
                "..#.....", ".#......", "######..", "........", "........", "........",
            ],
            '+' => &[
                "........", "........", "........", "...#....", "...#....", ".#####..",
                "...#....", "...#....", "........", "........", "........", "........",
            ],
            '-' => &[
                "........", "........", "........", "........", "........", ".#####..",
                "........", "........", "........", "........", "........", "........",
            ],
            '=' => &[
                "........", "........", "........", ".#####..", "........", "........",
                ".#####..", "........", "........", "........", "........", "........",
            ],
            '>' => &[
                "........", "#.......", ".##.....", "...##...", ".....#..", "...##...",
                ".##.....", "#.......", "........", "........", "........", "........",
            ],
            '<' => &[
                "........", ".....#..", "...##...", ".##.....", "#.......", ".##.....",
                "...##...", ".....#..", "........", "........", "........", "........",
            ],
            '\u{2265}' => &[
                "#.......", ".##.....", "...##...", "...##...", ".##.....", "#.......",
                "........", "#####...", "........", "........", "........", "........",
            ],
            '\u{2264}' => &[
                "....#...", "..##....", "##......", "##......", "..##....", "....#...",
                "........", "#####...", "........", "........", "........", "........",
            ],
            '(' => &[
                "...#....", "..#.....", ".#......", ".#......", ".#......", ".#......",
                ".#......", "..#.....", "...#....", "........", "........", "........",
            ],
            ')' => &[
                "...#....", "....#...", ".....#..", ".....#..", ".....#..", ".....#..",
                ".....#..", "....#...", "...#....", "........", "........", "........",
            ],
            '.' => &[
                "........", "........", "........", "........", "........", "........",
                "........", "..##....", "..##....", "........", "........", "........",
            ],
            ',' => &[
                "........", "........", "........", "........", "........", "........",
                "........", "..##....", "..##....", "...#....", "..#.....", "........",
            ],
            '\u{222B}' => &[
                "....##..", "...#..#.", "...#....", "...#....", "...#....", "...#....",
                "...#....", "...#....", "...#....", "...#....", "#..#....", ".##.....",
            ],
            '\u{221A}' => &[
                ".......#", "......#.", "......#.", ".....#..", ".....#..", "#...#...",
                ".#..#...", "..#.#...", "...#....", "........", "........", "........",
            ],
            '\u{2192}' => &[
                "........", "........", "........", "...#....", "....#...", "######..",
                "....#...", "...#....", "........", "........", "........", "........",
            ],
            _ => return None,
        })
    }

    #[cfg(test)]
    pub fn all_chars() -> Vec<char> {
        let mut v: Vec<char> = ('0'..='9').collect();
        v.extend("acdegilmnostxyz".chars());
        v.extend([
            '+', '-', '=', '>', '<', '\u{2265}', '\u{2264}', '(', ')', '.', ',', '\u{222B}',
            '\u{221A}', '\u{2192}',
        ]);
        v
    }
}
