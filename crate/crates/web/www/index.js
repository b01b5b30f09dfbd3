import init, { Sim, margin_curve_svg, gaussian_bounds_svg } from "./pkg/blockdyn_web.js";

const $ = (id) => document.getElementById(id);
let sim = null;
let running = false;

function config() {
  const v = (id) => $(id).value;
  return [
    `d = ${v("d")}`, `m = ${v("m")}`, `theta = ${v("theta")}`, `eta = ${v("eta")}`,
    `batch_size = ${v("batch")}`, `max_steps = ${v("steps")}`, `seed = ${v("seed")}`,
    `input.kind = ${v("input")}`, `label.kind = ${v("label")}`, `label.noise_rate = ${v("noise")}`,
    "eval_n = 2000", "g_mu_samples = 10000",
  ].join("\n");
}

function draw() {
  $("scatter").innerHTML = sim.scatter_svg();
  $("boundary").innerHTML = sim.boundary_svg(50);
  $("blocks").innerHTML = sim.blocks_svg();
  const r = JSON.parse(sim.metrics_json());
  const f = (x) => Number(x).toFixed(4);
  $("status").textContent =
    `step ${r.step}  test_acc ${f(r.test_acc)}  off-boundary ${f(r.test_acc_offboundary)}  test_loss ${f(r.test_loss)}\n` +
    `N1+ ${f(r.n1_plus)}  N1- ${f(r.n1_minus)}  N2+ ${f(r.n2_plus)}  N2- ${f(r.n2_minus)}  U ${f(r.u)}  R ${f(r.r)}`;
}

function reset() {
  running = false;
  try {
    if (sim) sim.free();
    sim = new Sim(config());
    draw();
  } catch (e) {
    sim = null;
    $("status").textContent = String(e);
  }
}

function tick() {
  if (!running || !sim) return;
  sim.advance(50);
  draw();
  if (sim.done()) running = false;
  else requestAnimationFrame(tick);
}

function bounds() {
  $("bounds-fig").innerHTML = gaussian_bounds_svg(Number($("eps").value), Number($("tmax").value));
}

await init();
$("reset").onclick = reset;
$("run").onclick = () => { if (!sim) reset(); running = true; tick(); };
$("pause").onclick = () => { running = false; };
$("step").onclick = () => { if (!sim) reset(); if (sim) { sim.advance(100); draw(); } };
$("margin").onclick = () => {
  try {
    $("margin-fig").innerHTML = margin_curve_svg(Number($("mc").value), BigInt($("seed").value));
  } catch (e) {
    $("margin-fig").textContent = String(e);
  }
};
$("eps").oninput = bounds;
$("tmax").oninput = bounds;
reset();
bounds();
