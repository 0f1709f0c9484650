import init, { pruneAround, searchTrajectories, lidCurve } from "./pkg/proxigraph_demo.js";

const $ = (id) => document.getElementById(id);

function fail(e) {
  $("error").textContent = String(e);
}

// ---- occlusion pruning

let base = [0.5, 0.5];

function drawPruning() {
  const r = JSON.parse(pruneAround(+$("p-n").value, +$("p-c").value, BigInt($("p-seed").value || 0), base[0], base[1]));
  const c = $("p-canvas"), g = c.getContext("2d"), s = c.width;
  const px = (p) => [p[0] * s, (1 - p[1]) * s];
  g.clearRect(0, 0, s, s);
  g.fillStyle = "#bbb";
  for (const p of r.points) { const [x, y] = px(p); g.fillRect(x - 1.5, y - 1.5, 3, 3); }
  const [bx, by] = px(r.base);
  g.setLineDash([3, 3]);
  g.strokeStyle = "#999";
  for (const [id, by_] of r.occluded_by) {
    if (by_ === null) continue;
    const [x0, y0] = px(r.points[id]), [x1, y1] = px(r.points[by_]);
    g.beginPath(); g.moveTo(x0, y0); g.lineTo(x1, y1); g.stroke();
  }
  g.setLineDash([]);
  g.strokeStyle = "#2e7d32";
  g.lineWidth = 2;
  for (const id of r.kept) {
    const [x, y] = px(r.points[id]);
    g.beginPath(); g.moveTo(bx, by); g.lineTo(x, y); g.stroke();
  }
  g.lineWidth = 1;
  for (const id of r.candidates) {
    const [x, y] = px(r.points[id]);
    g.fillStyle = r.kept.includes(id) ? "#2e7d32" : "#777";
    g.beginPath(); g.arc(x, y, 4, 0, 2 * Math.PI); g.fill();
  }
  g.fillStyle = "#c62828";
  g.beginPath(); g.arc(bx, by, 6, 0, 2 * Math.PI); g.fill();
  const capped = r.occluded_by.filter(([, b]) => b === null).length;
  $("p-info").textContent = `${r.kept.length} of ${r.candidates.length} candidates kept, ${r.occluded_by.length - capped} occluded, ${capped} beyond the cap`;
}

// ---- search trajectories

let querySeed = 1;

function drawTrajectories() {
  const n = +$("t-n").value, d = +$("t-d").value, ef = +$("t-ef").value;
  const r = JSON.parse(searchTrajectories(n, d, 7n, BigInt(querySeed), ef));
  const c = $("t-canvas"), g = c.getContext("2d"), W = c.width, H = c.height, pad = 40;
  const maxX = Math.max(r.hnsw.length, r.flat.length);
  const all = r.hnsw.concat(r.flat);
  const hi = Math.max(...all), lo = Math.min(r.true_nn, ...all) * 0.9;
  const ly = (v) => Math.log(Math.max(v, 1e-9));
  const X = (i) => pad + (i / Math.max(maxX - 1, 1)) * (W - 2 * pad);
  const Y = (v) => H - pad - ((ly(v) - ly(lo)) / Math.max(ly(hi) - ly(lo), 1e-9)) * (H - 2 * pad);
  g.clearRect(0, 0, W, H);
  g.strokeStyle = "#ccc";
  g.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  g.fillStyle = "#444";
  g.fillText("evaluations", W / 2 - 30, H - 10);
  g.fillText(hi.toPrecision(3), 2, pad + 4);
  g.fillText(lo.toPrecision(3), 2, H - pad);
  g.fillText(String(maxX), W - pad - 20, H - pad + 14);
  const line = (series, color) => {
    g.strokeStyle = color; g.lineWidth = 2; g.beginPath();
    series.forEach((v, i) => (i ? g.lineTo(X(i), Y(v)) : g.moveTo(X(i), Y(v))));
    g.stroke();
  };
  line(r.hnsw, "#1565c0");
  line(r.flat, "#e65100");
  g.strokeStyle = "#2e7d32"; g.lineWidth = 1;
  g.beginPath(); g.moveTo(pad, Y(r.true_nn)); g.lineTo(W - pad, Y(r.true_nn)); g.stroke();
  const hit = (f) => (f <= r.true_nn ? "found" : "missed");
  $("t-info").textContent = `hierarchical: ${r.hnsw.length} evaluations, nearest ${hit(r.hnsw_found)}; flat: ${r.flat.length} evaluations, nearest ${hit(r.flat_found)} (ef = ${ef})`;
}

// ---- LID

function drawLid() {
  const dims = [1, 2, 4, 6, 8, 12, 16, 24, 32];
  const pts = JSON.parse(lidCurve(+$("l-n").value, new Uint32Array(dims), +$("l-k").value, 3n));
  const c = $("l-canvas"), g = c.getContext("2d"), W = c.width, H = c.height, pad = 36;
  const max = Math.max(32, ...pts.map((p) => p.lid));
  const X = (d) => pad + (d / 32) * (W - 2 * pad);
  const Y = (v) => H - pad - (v / max) * (H - 2 * pad);
  g.clearRect(0, 0, W, H);
  g.strokeStyle = "#ccc"; g.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  g.setLineDash([4, 4]); g.beginPath(); g.moveTo(X(0), Y(0)); g.lineTo(X(32), Y(32)); g.stroke(); g.setLineDash([]);
  g.fillStyle = "#1565c0";
  for (const p of pts) { g.beginPath(); g.arc(X(p.d), Y(p.lid), 4, 0, 2 * Math.PI); g.fill(); }
  g.fillStyle = "#444";
  g.fillText("ambient d", W / 2 - 25, H - 8);
  g.fillText("LID", 4, pad - 8);
  $("l-info").textContent = pts.map((p) => `d=${p.d}: ${p.lid.toFixed(2)}`).join(", ");
}

function guard(f) {
  return () => { try { $("error").textContent = ""; f(); } catch (e) { fail(e); } };
}

await init().catch(fail);

$("p-canvas").addEventListener("click", (ev) => {
  const rect = ev.target.getBoundingClientRect();
  base = [(ev.clientX - rect.left) / rect.width, 1 - (ev.clientY - rect.top) / rect.height];
  guard(drawPruning)();
});
for (const id of ["p-n", "p-c", "p-seed"]) $(id).addEventListener("input", guard(drawPruning));
for (const id of ["t-n", "t-d", "t-ef"]) $(id).addEventListener("change", guard(drawTrajectories));
$("t-next").addEventListener("click", () => { querySeed += 1; guard(drawTrajectories)(); });
$("l-run").addEventListener("click", guard(drawLid));

guard(drawPruning)();
guard(drawTrajectories)();
guard(drawLid)();
