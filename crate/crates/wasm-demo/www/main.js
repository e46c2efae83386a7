import init, { Demo } from "./pkg/retina_kit_wasm.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");
let demo;
let detected = false;

function status(text) {
  $("status").textContent = text;
}

function currentView() {
  return document.querySelector("input[name=view]:checked").value;
}

function draw() {
  let view = currentView();
  if (view !== "input" && !detected) view = "input";
  const w = demo.view_width(view);
  const h = demo.view_height(view);
  if (!w) return;
  canvas.width = w;
  canvas.height = h;
  const pixels = new Uint8ClampedArray(demo.render(view));
  ctx.putImageData(new ImageData(pixels, w, h), 0, 0);
}

function inputReady() {
  detected = false;
  $("detect").disabled = false;
  $("sensitivity").disabled = true;
  document.querySelector("input[value=input]").checked = true;
  draw();
}

function report(json, ms) {
  const s = JSON.parse(json);
  status(`${s.hard} hard (${s.hard_pixels} px), ${s.soft} soft (${s.soft_pixels} px), ${s.outlier} outlier  [${ms.toFixed(0)} ms]`);
}

function timed(f) {
  const t = performance.now();
  const out = f();
  return [out, performance.now() - t];
}

$("generate").onclick = () => {
  demo.phantom(BigInt($("seed").value || 0));
  inputReady();
  status("phantom ready");
};

$("upload").onchange = async (ev) => {
  const file = ev.target.files[0];
  if (!file) return;
  const bitmap = await createImageBitmap(file);
  const scratch = new OffscreenCanvas(bitmap.width, bitmap.height);
  const sctx = scratch.getContext("2d");
  sctx.drawImage(bitmap, 0, 0);
  const data = sctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  demo.load_rgba(bitmap.width, bitmap.height, new Uint8Array(data.buffer));
  inputReady();
  status(`${file.name}: ${bitmap.width}x${bitmap.height}`);
};

$("detect").onclick = () => {
  status("detecting…");
  setTimeout(() => {
    try {
      const [json, ms] = timed(() => demo.detect());
      detected = true;
      $("sensitivity").disabled = false;
      $("sensitivity").value = 0.35;
      $("c-value").value = "0.35";
      document.querySelector("input[value=overlay]").checked = true;
      report(json, ms);
      draw();
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  }, 0);
};

$("sensitivity").oninput = (ev) => {
  const c = Number(ev.target.value);
  $("c-value").value = c.toFixed(2);
  const [json, ms] = timed(() => demo.rethreshold(c));
  report(json, ms);
  draw();
};

for (const r of document.querySelectorAll("input[name=view]")) r.onchange = draw;

await init();
demo = new Demo();
demo.phantom(0n);
inputReady();
status("phantom ready; press Detect");
