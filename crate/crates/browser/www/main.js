import init, { rank_spectrum, mask_grid, theorem_trials } from "./pkg/capaboost_browser.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guarded(outId, fn) {
  const out = $(outId);
  try {
    out.classList.remove("error");
    fn(out);
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e);
  }
}

function bars(canvas, values, { log = false, labels = null } = {}) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (values.length === 0) return;
  const tx = log ? (v) => (v > 0 ? Math.log10(v) : NaN) : (v) => v;
  const shown = values.map(tx);
  const finite = shown.filter(Number.isFinite);
  const hi = Math.max(...finite);
  const lo = log ? Math.min(...finite) - 1 : 0;
  const w = width / values.length;
  shown.forEach((v, i) => {
    const h = Number.isFinite(v) ? ((v - lo) / (hi - lo || 1)) * (height - 20) : 0;
    ctx.fillStyle = Number.isFinite(v) ? "#3569a8" : "#ccc";
    ctx.fillRect(i * w, height - 14 - h, Math.max(w - 1, 1), h);
    if (labels) {
      ctx.fillStyle = "#333";
      ctx.fillText(labels[i], i * w + 2, height - 2);
    }
  });
}

function spectrum() {
  guarded("sp-out", (out) => {
    const res = JSON.parse(
      rank_spectrum(num("sp-dim"), num("sp-r"), num("sp-d"), num("sp-rho"), $("sp-policy").value, num("sp-seed")),
    );
    bars($("sp-canvas"), res.singular_values, { log: true });
    out.textContent =
      `numerical rank ${res.rank} (expected ${res.expected_rank})\n` +
      `stored factor entries ${res.stored_params} of ${res.dense_params}`;
  });
}

function masks() {
  guarded("mg-out", (out) => {
    const rows = num("mg-rows");
    const cols = num("mg-cols");
    const res = JSON.parse(
      mask_grid(rows, cols, num("mg-d"), num("mg-rho"), $("mg-policy").value, num("mg-seed"), num("mg-step")),
    );
    const holder = $("mg-masks");
    holder.replaceChildren();
    const cell = Math.max(1, Math.floor(256 / Math.max(rows, cols)));
    for (const bits of res.masks) {
      const c = document.createElement("canvas");
      c.width = cols * cell;
      c.height = rows * cell;
      const ctx = c.getContext("2d");
      for (let i = 0; i < rows; i++) {
        for (let j = 0; j < cols; j++) {
          ctx.fillStyle = bits[i * cols + j] === "1" ? "#222" : "#eee";
          ctx.fillRect(j * cell, i * cell, cell, cell);
        }
      }
      holder.appendChild(c);
    }
    out.textContent =
      `union density ${res.union_fraction.toFixed(4)} (closed form ${res.expected_union_fraction.toFixed(4)})`;
  });
}

function theorem() {
  guarded("th-out", (out) => {
    const res = JSON.parse(theorem_trials(num("th-n"), num("th-r"), num("th-trials"), num("th-seed")));
    const keys = Object.keys(res.sum_rank_histogram).map(Number).sort((a, b) => a - b);
    bars($("th-canvas"), keys.map((k) => res.sum_rank_histogram[k]), { labels: keys });
    out.textContent =
      `regime ${res.regime}: ${res.successes}/${res.trials_run} with rank(X+Y) = rank(X) + rank(Y)`;
  });
}

await init();
$("sp-run").addEventListener("click", spectrum);
$("mg-run").addEventListener("click", masks);
$("th-run").addEventListener("click", theorem);
spectrum();
masks();
theorem();
