import init, { preference_curve, tiny_cloning_run, Episode } from "./pkg/trajpref_web.js";

const $ = (id) => document.getElementById(id);

function unwrap(text, target) {
  const v = JSON.parse(text);
  if (v.error) {
    target.innerHTML = `<span class="err">${v.error.kind}: ${v.error.message}</span>`;
    return null;
  }
  return v;
}

function plot() {
  const beta = parseFloat($("beta").value);
  const refm = parseFloat($("refm").value);
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const data = JSON.parse(preference_curve(beta, refm, refm - 40, refm + 40, 201));
  if (data.error) {
    ctx.fillText(data.error.message, 10, 20);
    return;
  }
  const pts = data.points;
  const maxLoss = Math.max(...pts.map((p) => p.loss), 1);
  const x = (m) => ((m - pts[0].margin) / (pts[pts.length - 1].margin - pts[0].margin)) * (canvas.width - 20) + 10;
  const y = (v, top) => canvas.height - 10 - (v / top) * (canvas.height - 20);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.moveTo(x(refm), 0);
  ctx.lineTo(x(refm), canvas.height);
  ctx.stroke();
  ctx.strokeStyle = "#1a5fb4";
  ctx.setLineDash([]);
  ctx.beginPath();
  pts.forEach((p, i) => (i ? ctx.lineTo(x(p.margin), y(p.loss, maxLoss)) : ctx.moveTo(x(p.margin), y(p.loss, maxLoss))));
  ctx.stroke();
  ctx.strokeStyle = "#c64600";
  ctx.setLineDash([5, 4]);
  ctx.beginPath();
  pts.forEach((p, i) => (i ? ctx.lineTo(x(p.margin), y(p.preference, 1)) : ctx.moveTo(x(p.margin), y(p.preference, 1))));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillStyle = "#222";
  ctx.fillText(`max loss ${maxLoss.toFixed(2)}`, 14, 16);
}

let episode = null;

function reset() {
  const transcript = $("transcript");
  try {
    episode = new Episode($("env").value, BigInt($("seed").value));
  } catch (e) {
    unwrap(e, transcript);
    return;
  }
  $("instruction").textContent = `Instruction: ${episode.instruction()}`;
  transcript.textContent = `Known words: ${JSON.parse(episode.vocabulary()).join(" ")}\n`;
}

function step(ev) {
  ev.preventDefault();
  if (!episode) reset();
  const action = $("action").value.trim();
  const v = unwrap(episode.step(action), $("transcript"));
  if (!v) return;
  let line = `> ${action}\n  ${v.observation}  (step ${v.steps}/${v.max_steps}, progress ${v.progress.toFixed(2)})\n`;
  if (v.done) line += `  episode over, reward ${v.reward}\n`;
  $("transcript").textContent += line;
  $("action").value = "";
}

function expert() {
  if (!episode) reset();
  const plan = unwrap(episode.expert_actions(), $("transcript"));
  if (plan) $("transcript").textContent += `expert: ${plan.join(" | ")}\n`;
}

function train() {
  const out = $("bc-out");
  out.textContent = "training...";
  setTimeout(() => {
    const v = unwrap(
      tiny_cloning_run($("bc-env").value, parseInt($("bc-n").value), 20, parseInt($("bc-epochs").value), 0n),
      out,
    );
    if (!v) return;
    out.textContent =
      `${v.parameters} parameters\n` +
      `epoch losses: ${v.epoch_losses.map((l) => l.toFixed(3)).join(" ")}\n` +
      `greedy reward on 20 held-out instructions: ${v.reward_before.toFixed(3)} -> ${v.reward_after.toFixed(3)}\n\n` +
      `sample: ${v.sample.instruction}\n  ${v.sample.actions.join("\n  ")}\n  reward ${v.sample.reward}`;
  }, 10);
}

await init();
$("plot").onclick = plot;
$("reset").onclick = reset;
$("expert").onclick = expert;
$("act").onsubmit = step;
$("bc-run").onclick = train;
plot();
reset();
