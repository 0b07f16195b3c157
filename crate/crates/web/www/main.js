// Built with: wasm-pack build crates/web --target web --out-dir www/pkg
import init, { EdgeScene, byte_curve } from "./pkg/aerflow_web.js";

await init();

const scene = new EdgeScene(346, 260, 7, 200000);
const w = scene.width(), h = scene.height();
const frameCanvas = document.getElementById("frame");
const spikeCanvas = document.getElementById("spikes");
for (const c of [frameCanvas, spikeCanvas]) {
  c.width = w;
  c.height = h;
}
const frameCtx = frameCanvas.getContext("2d");
const spikeCtx = spikeCanvas.getContext("2d");
const stats = document.getElementById("stats");

function draw() {
  frameCtx.putImageData(new ImageData(new Uint8ClampedArray(scene.frame_rgba()), w, h), 0, 0);
  spikeCtx.putImageData(new ImageData(new Uint8ClampedArray(scene.spike_rgba()), w, h), 0, 0);
  const ratio = scene.dense_bytes() / Math.max(scene.sparse_bytes(), 1);
  stats.textContent =
    `${scene.events()} events, ${scene.spikes()} spikes; ` +
    `dense ${scene.dense_bytes()} B vs sparse ${scene.sparse_bytes()} B (×${ratio.toFixed(1)})`;
}

let running = true;
function tick() {
  if (running) {
    scene.step();
    draw();
  }
  requestAnimationFrame(tick);
}
requestAnimationFrame(tick);

document.getElementById("run").onclick = (e) => {
  running = !running;
  e.target.textContent = running ? "Pause" : "Run";
};
document.getElementById("step").onclick = () => {
  scene.step();
  draw();
};
document.getElementById("speed").oninput = (e) => scene.set_speed(Number(e.target.value));
document.getElementById("noise").oninput = (e) => scene.set_noise_rate(Number(e.target.value));
document.getElementById("threshold").oninput = (e) => scene.set_threshold(Number(e.target.value));

const curve = document.getElementById("curve");
const cctx = curve.getContext("2d");

function plotCurve() {
  const [gw, gh] = document.getElementById("geometry").value.split("x").map(Number);
  const maxEvents = gw * gh * 2;
  const pts = byte_curve(gw, gh, maxEvents, 64);
  const ymax = pts[pts.length - 1];
  const X = (n) => 40 + (n / maxEvents) * (curve.width - 60);
  const Y = (b) => curve.height - 30 - (b / ymax) * (curve.height - 50);
  cctx.clearRect(0, 0, curve.width, curve.height);
  cctx.strokeStyle = "#000";
  cctx.beginPath();
  cctx.moveTo(40, 10);
  cctx.lineTo(40, curve.height - 30);
  cctx.lineTo(curve.width - 20, curve.height - 30);
  cctx.stroke();
  for (const [offset, color, name] of [[1, "#2166ac", "dense"], [2, "#b2182b", "sparse"]]) {
    cctx.strokeStyle = color;
    cctx.lineWidth = 2;
    cctx.beginPath();
    for (let i = 0; i < pts.length; i += 3) {
      const x = X(pts[i]), y = Y(pts[i + offset]);
      i === 0 ? cctx.moveTo(x, y) : cctx.lineTo(x, y);
    }
    cctx.stroke();
    cctx.fillStyle = color;
    cctx.fillText(name, curve.width - 70, 20 + 14 * offset);
  }
  cctx.fillStyle = "#000";
  cctx.fillText("events per window", curve.width / 2 - 40, curve.height - 10);
  document.getElementById("crossover").textContent =
    `Sparse copies are smaller below ${gw * gh} events per window; ` +
    `at one event per five pixels (${Math.floor((gw * gh) / 5)}) the dense copy is 5× larger.`;
}
document.getElementById("geometry").onchange = plotCurve;
plotCurve();
