//! Minimal static SVG line plots: time series and planar phase portraits.

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Force a square viewport with equal axis scales (phase portraits).
    pub equal_aspect: bool,
}

fn nice(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

impl LinePlot {
    pub fn time_series(title: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: "t [s]".to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
            equal_aspect: false,
        }
    }

    pub fn phase_portrait(title: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: "x1".to_string(),
            y_label: "x2".to_string(),
            series: Vec::new(),
            equal_aspect: true,
        }
    }

    pub fn add(&mut self, label: impl Into<String>, points: Vec<(f64, f64)>) {
        self.series.push(Series {
            label: label.into(),
            points,
        });
    }

    pub fn render(&self) -> String {
        let (w, h) = if self.equal_aspect {
            (620.0, 620.0)
        } else {
            (860.0, 480.0)
        };
        let (ml, mr, mt, mb) = (64.0, 150.0, 36.0, 48.0);
        let pw = w - ml - mr;
        let ph = h - mt - mb;

        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for s in &self.series {
            for &(x, y) in &s.points {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
            y_min = 0.0;
            y_max = 1.0;
        }
        if x_max - x_min < 1e-12 {
            x_max = x_min + 1.0;
        }
        if y_max - y_min < 1e-12 {
            y_max = y_min + 1.0;
        }
        if self.equal_aspect {
            let cx = 0.5 * (x_min + x_max);
            let cy = 0.5 * (y_min + y_max);
            let half = 0.5 * (x_max - x_min).max(y_max - y_min) * 1.05;
            x_min = cx - half;
            x_max = cx + half;
            y_min = cy - half;
            y_max = cy + half;
        } else {
            let pad = 0.04 * (y_max - y_min);
            y_min -= pad;
            y_max += pad;
        }
        let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
        let sy = |y: f64| mt + (y_max - y) / (y_max - y_min) * ph;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" \
             text-anchor=\"middle\">{}</text>\n",
            ml + pw / 2.0,
            self.title
        ));
        // Axes box and ticks.
        out.push_str(&format!(
            "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" \
             stroke=\"#444\" stroke-width=\"1\"/>\n"
        ));
        for i in 0..=4 {
            let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
            let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
            let px = sx(fx);
            let py = sy(fy);
            out.push_str(&format!(
                "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#bbb\" \
                 stroke-width=\"0.5\"/>\n",
                mt,
                mt + ph
            ));
            out.push_str(&format!(
                "<line x1=\"{ml}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#bbb\" \
                 stroke-width=\"0.5\"/>\n",
                ml + pw
            ));
            out.push_str(&format!(
                "<text x=\"{px}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"middle\">{}</text>\n",
                mt + ph + 16.0,
                nice(fx)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"end\">{}</text>\n",
                ml - 6.0,
                py + 4.0,
                nice(fy)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            ml + pw / 2.0,
            h - 10.0,
            self.x_label
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            mt + ph / 2.0,
            mt + ph / 2.0,
            self.y_label
        ));

        // Series polylines, decimated to keep files small.
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let stride = (s.points.len() / 4000).max(1);
            let mut d = String::new();
            for (n, &(x, y)) in s.points.iter().step_by(stride).enumerate() {
                let cmd = if n == 0 { 'M' } else { 'L' };
                d.push_str(&format!("{cmd}{:.2},{:.2} ", sx(x), sy(y)));
            }
            out.push_str(&format!(
                "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n"
            ));
            let ly = mt + 16.0 + 18.0 * k as f64;
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
                 stroke-width=\"2\"/>\n",
                ml + pw + 10.0,
                ml + pw + 34.0
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                ml + pw + 40.0,
                ly + 4.0,
                s.label
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}
