import init, { consensusReport, curationScatter, gz2Flow } from "./pkg/coldcure_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (v) => v.toFixed(4);

function table(head, rows) {
  const h = head.map((c) => `<th>${c}</th>`).join("");
  const b = rows
    .map((r) => "<tr>" + r.map((c) => (typeof c === "number" ? `<td class="num">${fmt(c)}</td>` : `<td>${c}</td>`)).join("") + "</tr>")
    .join("");
  return `<table><tr>${h}</tr>${b}</table>`;
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    $(out).innerHTML = `<p class="error">${e.message ?? e}</p>`;
  }
}

function showConsensus() {
  guard("consensus-out", () => {
    const r = JSON.parse(consensusReport($("probs").value, Number($("cs").value)));
    const rows = r.probs.map((p, i) => [`class ${i}`, p, r.conditional[i]]);
    $("consensus-out").innerHTML =
      `<p>P(consensus) = ${fmt(r.consensus)}, P(noconsensus) = ${fmt(r.noconsensus)}</p>` +
      table(["", "one annotator", "given consensus"], rows);
  });
}

function showScatter() {
  const s = Number($("ss").value);
  $("ss-value").textContent = s;
  guard("scatter-note", () => {
    const pts = JSON.parse(curationScatter(s, 300, Number($("seed").value)));
    const cv = $("scatter");
    const ctx = cv.getContext("2d");
    ctx.clearRect(0, 0, cv.width, cv.height);
    const sx = (x) => ((x + 4.5) / 9) * cv.width;
    const sy = (y) => cv.height - ((y + 3.5) / 7) * cv.height;
    const colours = ["#1f77b4", "#d62728"];
    let kept = 0;
    for (const p of pts) {
      ctx.beginPath();
      ctx.arc(sx(p.x), sy(p.y), 2.5, 0, 2 * Math.PI);
      if (p.label < 0) {
        ctx.strokeStyle = "#aaa";
        ctx.stroke();
      } else {
        kept++;
        ctx.fillStyle = colours[p.label];
        ctx.fill();
      }
    }
    $("scatter-note").textContent = `${kept} of ${pts.length} points reached consensus (grey rings were dropped)`;
  });
}

function showFlow() {
  guard("flow-out", () => {
    const r = JSON.parse(gz2Flow($("votes").value, $("integer").checked));
    $("flow-out").innerHTML =
      `<p>${r.original_paths} paths in the full tree, ${r.pruned_paths} after pruning.</p>` +
      table(["class", "path", "count"], r.rows.map((row) => [row.class, row.path, row.count]));
  });
}

await init();
$("probs").addEventListener("input", showConsensus);
$("cs").addEventListener("input", showConsensus);
$("ss").addEventListener("input", showScatter);
$("seed").addEventListener("input", showScatter);
$("split").addEventListener("click", showFlow);
showConsensus();
showScatter();
showFlow();
