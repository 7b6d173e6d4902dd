import init, { fidelityScan, g2Demo, sweepDemo } from "./pkg/herald_web.js";

const COLORS = { minus: "#1f5fbf", plus: "#c0392b", grey: "#888" };
const RANGES = {
  visibility: [0.5, 1.0],
  afterpulse: [0, 0.01],
  detuning_mhz: [0, 40],
  eta: [1e-4, 1e-3],
  dark_hz: [0, 500],
};

function $(id) {
  return document.getElementById(id);
}

function call(fn, ...args) {
  const v = JSON.parse(fn(...args));
  if (v && v.error) throw new Error(v.error);
  return v;
}

function show(id, text, failed = false) {
  const el = $(id);
  el.textContent = text;
  el.className = failed ? "out err" : "out";
}

// Axes with linear scales; returns the data-to-pixel mapping.
function frame(canvas, [x0, x1], [y0, y1], xlabel, ylabel) {
  const ctx = canvas.getContext("2d");
  const m = { l: 60, r: 15, t: 10, b: 40 };
  const w = canvas.width - m.l - m.r;
  const h = canvas.height - m.t - m.b;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#444";
  ctx.strokeRect(m.l, m.t, w, h);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  const px = (x) => m.l + ((x - x0) / (x1 - x0)) * w;
  const py = (y) => m.t + h - ((y - y0) / (y1 - y0)) * h;
  for (let i = 0; i <= 5; i++) {
    const x = x0 + ((x1 - x0) * i) / 5;
    const y = y0 + ((y1 - y0) * i) / 5;
    ctx.fillText(+x.toPrecision(3), px(x) - 12, m.t + h + 15);
    ctx.fillText(+y.toPrecision(3), 5, py(y) + 4);
  }
  ctx.fillText(xlabel, m.l + w / 2 - 40, canvas.height - 5);
  ctx.save();
  ctx.translate(12, m.t + h / 2 + 30);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(ylabel, 0, 0);
  ctx.restore();
  return { ctx, px, py };
}

function line({ ctx, px, py }, xs, ys, color, dashed = false) {
  ctx.strokeStyle = color;
  ctx.setLineDash(dashed ? [5, 4] : []);
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function legend({ ctx }, items, x = 75, y = 25) {
  items.forEach(([label, color], i) => {
    ctx.fillStyle = color;
    ctx.fillRect(x, y + 16 * i - 8, 10, 10);
    ctx.fillStyle = "#222";
    ctx.fillText(label, x + 15, y + 16 * i + 1);
  });
}

function runScan() {
  const knob = $("scan-knob").value;
  const [lo, hi] = RANGES[knob];
  const xs = Array.from({ length: 21 }, (_, i) => lo + ((hi - lo) * i) / 20);
  try {
    const pts = call(fidelityScan, knob, new Float64Array(xs));
    const f = frame($("scan-plot"), [lo, hi], [0.25, 1], knob, "fidelity");
    line(f, xs, pts.map((p) => p.f_minus), COLORS.minus);
    line(f, xs, pts.map((p) => p.f_plus), COLORS.plus);
    line(f, xs, pts.map((p) => p.f_lower_minus), COLORS.minus, true);
    line(f, xs, pts.map((p) => p.f_lower_plus), COLORS.plus, true);
    line(f, [lo, hi], [0.5, 0.5], COLORS.grey, true);
    legend(f, [["psi- best estimate (dashed: lower bound)", COLORS.minus], ["psi+", COLORS.plus]]);
    const mid = pts[10];
    show("scan-out", `${knob} = ${mid.x.toPrecision(3)}: F(psi-) = ${mid.f_minus.toFixed(3)}, F(psi+) = ${mid.f_plus.toFixed(3)}, heralds per attempt = ${mid.p_herald.toExponential(2)}`);
  } catch (e) {
    show("scan-out", e.message, true);
  }
}

function runG2() {
  const span = +$("g2-span").value;
  try {
    const t = performance.now();
    const d = call(g2Demo, +$("g2-eta").value, +$("g2-v").value, +$("g2-n").value, 0.64, 1);
    const ms = performance.now() - t;
    // Merge bins into one column per pixel so narrow peaks stay visible.
    const canvas = $("g2-plot");
    const cols = canvas.width - 75;
    const sums = new Float64Array(cols);
    for (const [x, n] of d.bins) {
      if (Math.abs(x) > span) continue;
      const c = Math.min(cols - 1, Math.floor(((x + span) / (2 * span)) * cols));
      sums[c] += n;
    }
    const top = Math.max(1, ...sums);
    const f = frame(canvas, [-span, span], [0, top], "dt (ns)", "coincidences");
    f.ctx.fillStyle = COLORS.minus;
    sums.forEach((n, c) => {
      const x = -span + ((c + 0.5) / cols) * 2 * span;
      f.ctx.fillRect(f.px(x), f.py(n), 1, f.py(0) - f.py(n));
    });
    show("g2-out", `visibility (|dt| < 2.56 ns) = ${d.visibility.toFixed(3)} ± ${d.visibility_se.toFixed(3)}; central/side area = ${d.area_ratio.toFixed(3)}; ${d.clicks} clicks; ${ms.toFixed(0)} ms`);
  } catch (e) {
    show("g2-out", e.message, true);
  }
}

function runSweep() {
  try {
    const t = performance.now();
    const d = call(sweepDemo, +$("sw-eta").value, +$("sw-n").value, 1);
    const ms = performance.now() - t;
    const xs = d.rows.map((r) => r.dtau_max_ns);
    const cell = (r, i) => r.cells[i];
    const maxN = Math.max(1, ...d.rows.flatMap((r) => r.cells.map((c) => c.n_events)));
    const f = frame($("sw-plot"), [0, Math.max(...xs)], [0.3, 1], "max |dtau| (ns)", "fidelity / events (scaled)");
    [0, 1].forEach((i) => {
      const color = i ? COLORS.plus : COLORS.minus;
      line(f, xs, d.rows.map((r) => cell(r, i).interference_bound), color, true);
      const best = d.rows.filter((r) => cell(r, i).f_best != null);
      line(f, best.map((r) => r.dtau_max_ns), best.map((r) => cell(r, i).f_best), color);
      f.ctx.fillStyle = color;
      d.rows.forEach((r) => {
        const y = 0.3 + (0.7 * cell(r, i).n_events) / maxN;
        f.ctx.fillRect(f.px(r.dtau_max_ns) - 3 + 6 * i, f.py(y), 4, f.py(0.3) - f.py(y));
      });
    });
    legend(f, [["psi- (solid: estimate, dashed: interference bound, bars: events)", COLORS.minus], ["psi+", COLORS.plus]], 75, 250);
    show("sw-out", `${d.heralds} heralds; most events: ${maxN}; ${ms.toFixed(0)} ms`);
  } catch (e) {
    show("sw-out", e.message, true);
  }
}

await init();
$("scan-knob").addEventListener("change", runScan);
$("g2-go").addEventListener("click", runG2);
$("sw-go").addEventListener("click", runSweep);
runScan();
