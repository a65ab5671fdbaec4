import init, { bandwidth, reference_table, relevance_curve, five_node_check } from "./pkg/inl_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const list = (id) => $(id).value.split(",").map((v) => Number(v.trim()));

function rows(table, head, body) {
  table.innerHTML = "";
  const tr = table.insertRow();
  for (const h of head) tr.insertCell().outerHTML = `<th>${h}</th>`;
  for (const r of body) {
    const row = table.insertRow();
    for (const c of r) row.insertCell().textContent = c;
  }
}

function fail(el, e) {
  el.innerHTML = `<span class="bad">${e.message ?? e}</span>`;
}

function computeBandwidth() {
  try {
    const v = JSON.parse(bandwidth(num("bw-q"), num("bw-p"), num("bw-s"), num("bw-j"), num("bw-n"), num("bw-eta")));
    rows($("bw-out"), ["scheme", "bits", "Gbit"],
      ["fl", "sl", "inl"].map((k) => [k.toUpperCase(), v.bits[k].toExponential(4), (v.bits[k] / 1e9).toFixed(4)]));
  } catch (e) {
    fail($("bw-out"), e);
  }
}

function plot(points) {
  const cv = $("cv-plot");
  const g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  const pad = 40;
  const xs = points.map((p) => p.c_s);
  const ys = points.map((p) => p.delta);
  const xmax = Math.max(...xs, 1e-9);
  const ymax = Math.max(...ys, 1e-9);
  const X = (x) => pad + (x / xmax) * (cv.width - 2 * pad);
  const Y = (y) => cv.height - pad - (y / ymax) * (cv.height - 2 * pad);
  g.strokeStyle = "#999";
  g.beginPath();
  g.moveTo(pad, pad);
  g.lineTo(pad, cv.height - pad);
  g.lineTo(cv.width - pad, cv.height - pad);
  g.stroke();
  g.fillStyle = "#222";
  g.fillText("C_s (bits)", cv.width - pad - 50, cv.height - pad + 25);
  g.fillText("Δ_s (bits)", 5, pad - 10);
  g.fillText(xmax.toFixed(3), cv.width - pad - 20, cv.height - pad + 12);
  g.fillText(ymax.toFixed(3), 2, pad + 4);
  const sorted = [...points].sort((a, b) => a.c_s - b.c_s);
  g.strokeStyle = "#1565c0";
  g.beginPath();
  sorted.forEach((p, i) => (i ? g.lineTo(X(p.c_s), Y(p.delta)) : g.moveTo(X(p.c_s), Y(p.delta))));
  g.stroke();
  for (const p of points) {
    g.beginPath();
    g.arc(X(p.c_s), Y(p.delta), 3, 0, 2 * Math.PI);
    g.fill();
    g.fillText(`s=${p.s}`, X(p.c_s) + 5, Y(p.delta) - 5);
  }
}

function traceCurve() {
  $("cv-status").textContent = "working…";
  // let the status paint before the grid search blocks the thread
  setTimeout(() => {
    try {
      const pts = JSON.parse(relevance_curve(new Float64Array(list("cv-flips")), new Float64Array(list("cv-s")), num("cv-step")));
      plot(pts);
      rows($("cv-out"), ["s", "Δ_s", "C_s", "L_s", "identity residual"],
        pts.map((p) => [p.s, p.delta.toFixed(6), p.c_s.toFixed(6), p.l_s.toFixed(6), p.identity_residual.toExponential(2)]));
      $("cv-status").textContent = "";
    } catch (e) {
      fail($("cv-status"), e);
    }
  }, 10);
}

function checkRegion() {
  const input = {
    flips: list("fn-flips"),
    capacities: { c15: num("fn-c15"), c24: num("fn-c24"), c34: num("fn-c34"), c45: num("fn-c45") },
  };
  try {
    const v = JSON.parse(five_node_check(JSON.stringify(input)));
    const head = v.verdict.feasible ? "FEASIBLE" : "INFEASIBLE";
    $("fn-out").textContent = `${head}\n${JSON.stringify(v, null, 2)}`;
  } catch (e) {
    fail($("fn-out"), e);
  }
}

await init();
const ref = JSON.parse(reference_table());
rows($("bw-ref"), ["model", "q", "scheme", "Gbit", "reference"],
  ref.map((c) => [c.model, c.q, c.scheme.toUpperCase(), c.gbits.toFixed(4), c.reference]));
$("bw-go").onclick = computeBandwidth;
$("cv-go").onclick = traceCurve;
$("fn-go").onclick = checkRegion;
computeBandwidth();
