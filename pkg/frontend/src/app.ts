// Bootstrap: login form, then hand the session to the controller.

import { StudyApi } from "./api.js";
import { SessionController } from "./session.js";

export function mountApp(root: HTMLElement, baseUrl = ""): void {
  const doc = root.ownerDocument;
  const params = new URLSearchParams(doc.defaultView?.location.search ?? "");

  const login = doc.createElement("form");
  login.className = "login";
  const studyInput = doc.createElement("input");
  studyInput.placeholder = "study id";
  studyInput.value = params.get("study") ?? "";
  const subjectInput = doc.createElement("input");
  subjectInput.placeholder = "subject id";
  subjectInput.value = params.get("subject") ?? "";
  const button = doc.createElement("button");
  button.type = "submit";
  button.textContent = "Start";
  const error = doc.createElement("p");
  error.className = "error";
  login.append(studyInput, subjectInput, button, error);
  root.append(login);

  login.addEventListener("submit", (event) => {
    event.preventDefault();
    const studyId = studyInput.value.trim();
    const subjectId = subjectInput.value.trim();
    if (!studyId || !subjectId) {
      error.textContent = "Both ids are required.";
      return;
    }
    const api = new StudyApi(baseUrl, studyId);
    const stage = doc.createElement("div");
    stage.className = "stage";
    root.replaceChildren(stage);
    const controller = new SessionController(api, stage);
    controller.start(subjectId, true).catch((err) => {
      root.replaceChildren(login);
      error.textContent = `Could not start: ${err.message}. Retry when online.`;
    });
  });
}

declare global {
  interface Window {
    __vqstudyMounted?: boolean;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const rootEl = document.getElementById("app") as HTMLElement;
  if (!window.__vqstudyMounted) {
    window.__vqstudyMounted = true;
    mountApp(rootEl);
  }
}
