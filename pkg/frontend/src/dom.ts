/**
 * Minimal DOM bindings for SketchController: variable panel, store
 * counter, rewind slider, prompt box, capture-square keyboard hooks, and
 * the generated-image strip (shown below the canvas, offered as a
 * download). Browser-only; everything here is a thin view over the
 * headless controller.
 */

import { SketchController, GuiVariable } from "./gui.js";

export interface MountedPanel {
  root: HTMLElement;
  dispose: () => void;
}

export function mountControlPanel(
  controller: SketchController,
  parent: HTMLElement,
): MountedPanel {
  if (typeof document === "undefined") {
    throw new Error("mountControlPanel needs a DOM");
  }
  const root = document.createElement("div");
  root.className = "artbridge-panel";

  const banner = document.createElement("div");
  banner.className = "artbridge-banner";
  banner.style.display = "none";
  banner.textContent = "server unavailable - variable panel only";
  root.appendChild(banner);

  const varBox = document.createElement("div");
  for (const variable of controller.variables.values()) {
    varBox.appendChild(variableRow(controller, variable));
  }
  root.appendChild(varBox);

  const counter = document.createElement("div");
  counter.className = "artbridge-counter";
  root.appendChild(counter);

  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0";
  slider.max = String(controller.frameCapacity - 1);
  slider.disabled = true;
  slider.addEventListener("change", () => {
    void controller.selectFrame(Number(slider.value));
  });
  root.appendChild(slider);

  const prompt = document.createElement("input");
  prompt.type = "text";
  prompt.placeholder = "new image prompt";
  prompt.addEventListener("input", () => controller.setPrompt(prompt.value));
  root.appendChild(prompt);

  const results = document.createElement("div");
  results.className = "artbridge-results";
  root.appendChild(results);

  // debug containers: per-buffer originals + the assembled final,
  // collapsed by default
  const debug = document.createElement("details");
  debug.className = "artbridge-debug";
  const summary = document.createElement("summary");
  summary.textContent = "debug: buffers and final";
  debug.appendChild(summary);
  const debugStrip = document.createElement("div");
  debug.appendChild(debugStrip);
  root.appendChild(debug);

  const renderDebug = () => {
    if (!debug.open) return;
    debugStrip.textContent = "";
    const client = controller.client;
    for (const [bufferId, pngB64] of client.lastCaptures) {
      const fig = document.createElement("figure");
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${pngB64}`;
      const cap = document.createElement("figcaption");
      cap.textContent = bufferId;
      fig.append(img, cap);
      debugStrip.appendChild(fig);
    }
    if (controller.displayedImage) {
      const fig = document.createElement("figure");
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${controller.displayedImage}`;
      const cap = document.createElement("figcaption");
      cap.textContent = "final";
      fig.append(img, cap);
      debugStrip.appendChild(fig);
    }
  };
  debug.addEventListener("toggle", renderDebug);

  const renderCounter = () => {
    counter.textContent =
      `stored ${controller.storedFrames}/${controller.frameCapacity}`;
    slider.disabled = !controller.sliderEnabled;
    banner.style.display = controller.serverAvailable ? "none" : "block";
    renderDebug();
  };
  controller.onStateChange(renderCounter);
  controller.onDisplay(renderCounter);
  controller.onStyleResult((result) => {
    const img = document.createElement("img");
    img.src = `data:image/png;base64,${result.pngB64}`;
    const link = document.createElement("a");
    link.href = img.src;
    link.download = `style-${result.frameIndex}-${result.seed}.png`;
    link.appendChild(img);
    results.appendChild(link);
    link.click(); // auto-download the generated image
  });

  const keyHandler = (ev: KeyboardEvent) => {
    if (ev.key === "Tab") ev.preventDefault();
    void controller.handleKey(ev.key);
  };
  document.addEventListener("keydown", keyHandler);

  renderCounter();
  parent.appendChild(root);
  return {
    root,
    dispose: () => {
      document.removeEventListener("keydown", keyHandler);
      root.remove();
    },
  };
}

function variableRow(
  controller: SketchController,
  variable: GuiVariable,
): HTMLElement {
  const row = document.createElement("label");
  row.textContent = variable.name;
  let input: HTMLInputElement | HTMLSelectElement;
  switch (variable.kind) {
    case "number": {
      input = document.createElement("input");
      input.type = "range";
      input.min = String(variable.min);
      input.max = String(variable.max);
      input.step = String(variable.step ?? 1);
      input.value = String(variable.value);
      input.addEventListener("change", () => {
        void controller.setVariable(variable.name, Number(input.value));
      });
      break;
    }
    case "boolean": {
      input = document.createElement("input");
      input.type = "checkbox";
      (input as HTMLInputElement).checked = variable.value;
      input.addEventListener("change", () => {
        void controller.setVariable(
          variable.name, (input as HTMLInputElement).checked);
      });
      break;
    }
    case "choice": {
      const select = document.createElement("select");
      for (const choice of variable.choices) {
        const option = document.createElement("option");
        option.value = choice;
        option.textContent = choice;
        select.appendChild(option);
      }
      select.value = variable.value;
      select.addEventListener("change", () => {
        void controller.setVariable(variable.name, select.value);
      });
      input = select;
      break;
    }
  }
  row.appendChild(input);
  return row;
}
