/** Keyboard shortcuts: 1-9 pick the first nine class cards, N opens new-class.
 *
 * Shortcuts call the same submit path as clicking, so the requests they
 * produce are identical.
 */

import { LabelingApp } from "./app.js";

export function attachShortcuts(app: LabelingApp, target: Document): void {
  target.addEventListener("keydown", (event: KeyboardEvent) => {
    if (event.target instanceof HTMLInputElement) {
      return;            // typing a class name
    }
    if (event.key >= "1" && event.key <= "9") {
      const index = Number(event.key) - 1;
      const cls = app.classes[index];
      if (cls) {
        void app.submitExisting(cls.class_id);
      }
      event.preventDefault();
    } else if (event.key === "n" || event.key === "N") {
      app.el.newClassInput.focus();
      event.preventDefault();
    }
  });
}
