/** DOM bootstrap: wires the controller to the page served under /ui. */

import { ApiClient } from "./api.js";
import { renderApp } from "./render.js";
import { Workbench } from "./workbench.js";

function mount(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");

  const api = new ApiClient((url, init) => fetch(url, init), "");
  const workbench = new Workbench(api, (state) => {
    root.innerHTML = renderApp(state);
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const chip = target.closest<HTMLElement>(".gap-chip");
    if (chip) {
      void workbench.selectGap({
        start: Number(chip.dataset.gapStart),
        length: Number(chip.dataset.gapLength),
      });
      return;
    }
    const accept = target.closest<HTMLElement>("button.accept");
    if (accept) {
      void workbench.acceptRank(Number(accept.dataset.rank));
    }
  });

  root.addEventListener("mouseover", (event) => {
    const item = (event.target as HTMLElement).closest<HTMLElement>(".hypothesis");
    if (item) workbench.hover(Number(item.dataset.rank));
  });
  root.addEventListener("mouseout", (event) => {
    const item = (event.target as HTMLElement).closest<HTMLElement>(".hypothesis");
    if (item) workbench.hover(null);
  });

  root.addEventListener("submit", (event) => {
    const form = (event.target as HTMLElement).closest<HTMLFormElement>("form.override");
    if (!form) return;
    event.preventDefault();
    const input = form.elements.namedItem("override") as HTMLInputElement;
    if (input.value) void workbench.acceptOverride(input.value);
  });

  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    if (event.key === "n") {
      void workbench.selectNextGap();
    } else if (/^[1-9]$/.test(event.key)) {
      void workbench.acceptRank(Number(event.key));
    }
  });

  const form = document.getElementById("start-form") as HTMLFormElement | null;
  form?.addEventListener("submit", (event) => {
    event.preventDefault();
    const input = document.getElementById("start-text") as HTMLTextAreaElement;
    if (input.value) void workbench.start(input.value);
  });
}

mount();
