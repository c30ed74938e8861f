//! Synthetic slide corpus mirroring the six slide categories used for
//! benchmarking: two-tone slides rendered with an embedded 8x8 bitmap font so
//! that the generated PNGs are byte-identical on every platform.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use font8x8::{UnicodeFonts, BASIC_FONTS};
use image::{Rgb, RgbImage};

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const TERMINAL_BG: Rgb<u8> = Rgb([24, 24, 24]);
const TERMINAL_FG: Rgb<u8> = Rgb([230, 230, 230]);
const PANEL: Rgb<u8> = Rgb([214, 219, 228]);
const ACCENT: Rgb<u8> = Rgb([40, 90, 170]);

const SMOOTHING_SIGMA: f32 = 1.3;

/// Width in pixels of one glyph cell at scale 1.
pub const GLYPH_PX: u32 = 8;

/// Raster canvas with a few drawing primitives.
pub struct Canvas {
    img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32, background: Rgb<u8>) -> Self {
        Self {
            img: RgbImage::from_pixel(width, height, background),
        }
    }

    pub fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, color: Rgb<u8>) {
        let x_end = (x + w).min(self.img.width());
        let y_end = (y + h).min(self.img.height());
        for py in y..y_end {
            for px in x..x_end {
                self.img.put_pixel(px, py, color);
            }
        }
    }

    pub fn outline_rect(&mut self, x: u32, y: u32, w: u32, h: u32, thickness: u32, color: Rgb<u8>) {
        self.fill_rect(x, y, w, thickness, color);
        self.fill_rect(x, y + h.saturating_sub(thickness), w, thickness, color);
        self.fill_rect(x, y, thickness, h, color);
        self.fill_rect(x + w.saturating_sub(thickness), y, thickness, h, color);
    }

    /// Straight line between two points, `thickness` pixels wide.
    pub fn line(&mut self, from: (u32, u32), to: (u32, u32), thickness: u32, color: Rgb<u8>) {
        let (x0, y0) = (from.0 as i64, from.1 as i64);
        let (x1, y1) = (to.0 as i64, to.1 as i64);
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for i in 0..=steps {
            let x = x0 + (x1 - x0) * i / steps;
            let y = y0 + (y1 - y0) * i / steps;
            self.fill_rect(x as u32, y as u32, thickness, thickness, color);
        }
    }

    /// Draws `text` with its top-left corner at `(x, y)`. Characters missing
    /// from the font are skipped but still advance the cursor. Returns the
    /// rendered width in pixels.
    pub fn text(&mut self, x: u32, y: u32, text: &str, scale: u32, color: Rgb<u8>) -> u32 {
        let mut cursor = x;
        for ch in text.chars() {
            if let Some(glyph) = BASIC_FONTS.get(ch) {
                for (row, bits) in glyph.iter().enumerate() {
                    for col in 0..GLYPH_PX {
                        if bits >> col & 1 == 1 {
                            self.fill_rect(
                                cursor + col * scale,
                                y + row as u32 * scale,
                                scale,
                                scale,
                                color,
                            );
                        }
                    }
                }
            }
            cursor += GLYPH_PX * scale;
        }
        cursor - x
    }

    pub fn into_image(self) -> RgbImage {
        self.img
    }

    /// Softens the hard bitmap edges into something closer to a screenshot
    /// of anti-aliased text.
    pub fn into_smoothed_image(self) -> RgbImage {
        image::imageops::blur(&self.img, SMOOTHING_SIGMA)
    }
}

/// One slide of the fixture corpus.
#[derive(Debug, Clone)]
pub struct FixtureSlide {
    pub file: &'static str,
    /// Category tag as it appears in `deck.json`.
    pub category: &'static str,
    pub width: u32,
    pub height: u32,
    pub key_terms: &'static [&'static str],
    /// Text blocks in reading order.
    pub blocks: Vec<TextBlock>,
    pub layout: Layout,
}

#[derive(Debug, Clone)]
pub struct TextBlock {
    pub lines: &'static [&'static str],
    pub scale: u32,
    pub style: BlockStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStyle {
    Plain,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Document,
    Window,
    Annotated,
}

impl FixtureSlide {
    /// True for the three text-dense categories.
    pub fn is_text_dense(&self) -> bool {
        matches!(
            self.category,
            "clean_text_terminal" | "result_summary" | "text_overview"
        )
    }

    /// All rendered text, one line per rendered line.
    pub fn rendered_text(&self) -> String {
        self.blocks
            .iter()
            .flat_map(|b| b.lines.iter().copied())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Lower-cased purely alphabetic words of at least three letters.
    pub fn dictionary_words(&self) -> Vec<String> {
        dictionary_words(&self.rendered_text())
    }

    pub fn render(&self) -> RgbImage {
        let mut canvas = Canvas::new(self.width, self.height, WHITE);
        let margin = 48;
        let mut y = margin;
        match self.layout {
            Layout::Document => {}
            Layout::Window => {
                canvas.fill_rect(0, 0, self.width, 56, PANEL);
                canvas.outline_rect(0, 0, self.width, self.height, 4, ACCENT);
                for i in 0..3 {
                    canvas.fill_rect(self.width - 60 - i * 44, 16, 28, 24, ACCENT);
                }
                canvas.fill_rect(0, 56, 220, self.height - 56, PANEL);
                for i in 0..8 {
                    canvas.fill_rect(24, 96 + i * 64, 170, 36, WHITE);
                }
                canvas.outline_rect(260, 120, self.width - 320, self.height - 200, 3, BLACK);
                y = 80;
            }
            Layout::Annotated => {
                for i in 0..6u32 {
                    let bx = 60 + (i % 3) * 500;
                    let by = 420 + (i / 3) * 220;
                    canvas.outline_rect(bx, by, 380, 150, 3, ACCENT);
                    canvas.fill_rect(bx + 20, by + 20, 340, 110, PANEL);
                    if i % 3 != 2 {
                        canvas.line((bx + 380, by + 75), (bx + 500, by + 75), 4, BLACK);
                    }
                }
                for i in 0..5u32 {
                    canvas.line((200 + i * 260, 380), (120 + i * 300, 430), 3, BLACK);
                }
            }
        }

        let x0 = match self.layout {
            Layout::Window => 280,
            _ => margin,
        };
        for block in &self.blocks {
            let line_h = GLYPH_PX * block.scale + 4 * block.scale;
            match block.style {
                BlockStyle::Plain => {
                    for line in block.lines {
                        canvas.text(x0, y, line, block.scale, BLACK);
                        y += line_h;
                    }
                }
                BlockStyle::Terminal => {
                    let pad = 16;
                    let h = block.lines.len() as u32 * line_h + 2 * pad;
                    canvas.fill_rect(x0 - pad, y, self.width - 2 * x0 + 2 * pad, h, TERMINAL_BG);
                    let mut ty = y + pad;
                    for line in block.lines {
                        canvas.text(x0, ty, line, block.scale, TERMINAL_FG);
                        ty += line_h;
                    }
                    y += h;
                }
            }
            y += line_h;
        }
        canvas.into_smoothed_image()
    }
}

/// Lower-cased purely alphabetic words of at least three letters.
pub fn dictionary_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| w.len() >= 3 && w.chars().all(|c| c.is_ascii_alphabetic()))
        .map(str::to_ascii_lowercase)
        .collect()
}

fn block(lines: &'static [&'static str], scale: u32) -> TextBlock {
    TextBlock {
        lines,
        scale,
        style: BlockStyle::Plain,
    }
}

fn terminal(lines: &'static [&'static str], scale: u32) -> TextBlock {
    TextBlock {
        lines,
        scale,
        style: BlockStyle::Terminal,
    }
}

/// The six-slide corpus, one slide per category, in deck order.
pub fn corpus() -> Vec<FixtureSlide> {
    vec![
        FixtureSlide {
            file: "01_clean_text_terminal.png",
            category: "clean_text_terminal",
            width: 1500,
            height: 844,
            key_terms: &["ifconfig", "address", "VM2"],
            layout: Layout::Document,
            blocks: vec![
                block(&["Step 4: Find VM2 IP Address"], 4),
                block(
                    &[
                        "Open a terminal on the second virtual machine and run",
                        "the ifconfig command. Write down the inet address of",
                        "the network interface because you will need it later.",
                    ],
                    3,
                ),
                terminal(
                    &[
                        "student@vm2:~$ ifconfig",
                        "eth0: flags=4163 mtu 1500",
                        "inet 10.0.2.15 netmask 255.255.255.0",
                        "ether 08:00:27:4e:66:a1 txqueuelen 1000",
                    ],
                    3,
                ),
            ],
        },
        FixtureSlide {
            file: "02_result_summary.png",
            category: "result_summary",
            width: 1280,
            height: 720,
            key_terms: &["firewall", "blocked", "results"],
            layout: Layout::Document,
            blocks: vec![
                block(&["Lab Results Summary"], 4),
                block(
                    &[
                        "The firewall blocked every inbound connection",
                        "except secure shell traffic on the default port.",
                        "Scanning the server again shows only one open",
                        "service, which confirms the new rules are active.",
                        "Record these results in your lab report before",
                        "moving on to the next exercise.",
                    ],
                    3,
                ),
            ],
        },
        FixtureSlide {
            file: "03_gui_screenshot.png",
            category: "gui_screenshot",
            width: 1366,
            height: 768,
            key_terms: &["capture", "filter"],
            layout: Layout::Window,
            blocks: vec![
                block(&["Packet Capture"], 3),
                block(&["Apply display filter", "Start capture"], 2),
            ],
        },
        FixtureSlide {
            file: "04_dense_annotation.png",
            category: "dense_annotation",
            width: 1600,
            height: 900,
            key_terms: &["attacker", "victim", "router"],
            layout: Layout::Annotated,
            blocks: vec![
                block(&["Man in the Middle Topology"], 3),
                block(
                    &[
                        "attacker poisons arp cache of victim and router",
                        "traffic flows through attacker before reaching gateway",
                    ],
                    1,
                ),
            ],
        },
        FixtureSlide {
            file: "05_cli_with_output.png",
            category: "cli_with_output",
            width: 1024,
            height: 768,
            key_terms: &["scp", "password"],
            layout: Layout::Document,
            blocks: vec![
                block(&["Copy the key file"], 3),
                terminal(
                    &[
                        "$ scp id_rsa.pub student@10.0.2.15:~/",
                        "student@10.0.2.15's password:",
                        "id_rsa.pub   100%  563   1.2MB/s   00:00",
                        "$ ssh student@10.0.2.15",
                        "Last login: Mon Oct 14 09:12:55 2024",
                    ],
                    2,
                ),
            ],
        },
        FixtureSlide {
            file: "06_text_overview.png",
            category: "text_overview",
            width: 1920,
            height: 1080,
            key_terms: &["objectives", "encryption", "network"],
            layout: Layout::Document,
            blocks: vec![
                block(&["Lab Overview and Objectives"], 4),
                block(
                    &[
                        "In this lab you will configure two virtual machines on a private network.",
                        "You will generate a key pair and copy the public key to the remote host.",
                        "Next you will compare password login with public key authentication.",
                        "Finally you will inspect the traffic to confirm that encryption protects",
                        "the session from anyone watching the network.",
                    ],
                    3,
                ),
            ],
        },
    ]
}

/// Writes the corpus PNGs and a `deck.json` manifest into `dir`, returning the
/// manifest path.
pub fn write_corpus(dir: &Path, deck_id: &str, title: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let slides = corpus();
    let mut entries = Vec::with_capacity(slides.len());
    for slide in &slides {
        slide
            .render()
            .save(dir.join(slide.file))
            .map_err(io::Error::other)?;
        entries.push(serde_json::json!({
            "file": slide.file,
            "category": slide.category,
            "key_terms": slide.key_terms,
        }));
    }
    let manifest = serde_json::json!({
        "deck_id": deck_id,
        "title": title,
        "slides": entries,
    });
    let path = dir.join("deck.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

/// Solid white PNG of the given size.
pub fn write_blank(path: &Path, width: u32, height: u32) -> io::Result<()> {
    Canvas::new(width, height, WHITE)
        .into_image()
        .save(path)
        .map_err(io::Error::other)
}

/// Black-on-white PNG with a single line of text at the given glyph scale.
pub fn write_text_image(path: &Path, text: &str, scale: u32) -> io::Result<()> {
    let width = (text.chars().count() as u32 * GLYPH_PX * scale + 96).max(64);
    let height = GLYPH_PX * scale + 96;
    let mut canvas = Canvas::new(width, height, WHITE);
    canvas.text(48, 48, text, scale, BLACK);
    canvas.into_smoothed_image().save(path).map_err(io::Error::other)
}

/// Writes a stand-in OCR engine into `dir` that answers with the exact
/// rendered text of any corpus slide in `corpus_dir`, matched by content
/// hash. Other images read as blank; a missing file makes it exit non-zero.
/// Returns the script path.
///
/// Meant for hosts without a real engine; it follows the same command line
/// (`<image> stdout ...`, `--version`).
pub fn write_transcript_engine(dir: &Path, corpus_dir: &Path) -> io::Result<PathBuf> {
    use sha2::{Digest, Sha256};
    use std::fmt::Write as _;
    use std::os::unix::fs::PermissionsExt;

    let transcripts = dir.join("transcripts");
    fs::create_dir_all(&transcripts)?;
    for slide in corpus() {
        let bytes = fs::read(corpus_dir.join(slide.file))?;
        let hex = Sha256::digest(&bytes)
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            });
        fs::write(transcripts.join(format!("{hex}.txt")), slide.rendered_text())?;
    }
    let script = dir.join("transcript-ocr");
    fs::write(
        &script,
        format!(
            "#!/bin/sh\n\
             if [ \"$1\" = \"--version\" ]; then echo \"transcript 1.0\"; exit 0; fi\n\
             h=$(sha256sum \"$1\" | cut -d' ' -f1)\n\
             f=\"{}/$h.txt\"\n\
             [ -f \"$f\" ] && exec cat \"$f\"\n\
             [ -f \"$1\" ] || {{ echo \"cannot read $1\" >&2; exit 1; }}\n",
            transcripts.display()
        ),
    )?;
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755))?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_covers_six_categories_once() {
        let slides = corpus();
        let mut cats: Vec<_> = slides.iter().map(|s| s.category).collect();
        cats.sort();
        cats.dedup();
        assert_eq!(cats.len(), 6);
        assert_eq!(slides.iter().filter(|s| s.is_text_dense()).count(), 3);
    }

    #[test]
    fn anchor_slide_is_1500_by_844() {
        let img = corpus()[0].render();
        assert_eq!(img.dimensions(), (1500, 844));
    }

    #[test]
    fn text_fits_inside_canvas() {
        for slide in corpus() {
            let x0 = if slide.layout == Layout::Window { 280 } else { 48 };
            for b in &slide.blocks {
                for line in b.lines {
                    let w = line.chars().count() as u32 * GLYPH_PX * b.scale;
                    assert!(x0 + w <= slide.width, "{}: {line:?} overflows", slide.file);
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = &corpus()[1];
        assert_eq!(s.render().into_raw(), s.render().into_raw());
    }

    #[test]
    fn dictionary_words_skip_numbers_and_short_tokens() {
        assert_eq!(
            dictionary_words("run ifconfig on eth0 at 10.0.2.15"),
            vec!["run", "ifconfig"]
        );
    }

    #[test]
    fn transcript_engine_answers_with_rendered_text() {
        let dir = std::env::temp_dir().join(format!("slidewise-fixtures-{}", std::process::id()));
        let corpus_dir = dir.join("corpus");
        write_corpus(&corpus_dir, "t", "T").unwrap();
        let engine = write_transcript_engine(&dir.join("engine"), &corpus_dir).unwrap();
        let slide = &corpus()[4];
        let out = std::process::Command::new(&engine)
            .args([corpus_dir.join(slide.file).as_os_str(), "stdout".as_ref()])
            .output()
            .unwrap();
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap(), slide.rendered_text());
        let blank = dir.join("blank.png");
        write_blank(&blank, 8, 8).unwrap();
        let out = std::process::Command::new(&engine)
            .args([blank.as_os_str(), "stdout".as_ref()])
            .output()
            .unwrap();
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
        let out = std::process::Command::new(&engine)
            .args([dir.join("missing.png").as_os_str(), "stdout".as_ref()])
            .output()
            .unwrap();
        assert!(!out.status.success());
        fs::remove_dir_all(&dir).unwrap();
    }
}
