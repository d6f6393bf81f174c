import { StudyApi } from "../src/api.js";
import { SessionController } from "../src/session.js";
import { FakeStudyServer } from "./fake_server.js";

export function makeController(server: FakeStudyServer) {
  server.install();
  const root = document.createElement("div");
  document.body.append(root);
  const api = new StudyApi("", server.studyId);
  return { controller: new SessionController(api, root), root, api };
}

export function endVideo(controller: SessionController) {
  controller.gate.video.dispatchEvent(new Event("ended"));
}

export function setSlider(controller: SessionController, value: number) {
  controller.slider.input.value = String(value);
  controller.slider.input.dispatchEvent(new Event("input"));
}

export function submitForm(controller: SessionController) {
  controller.ratingForm.dispatchEvent(
    new Event("submit", { bubbles: true, cancelable: true }),
  );
}

export async function flush() {
  // settle promise chains kicked off by DOM handlers: a few macrotask
  // turns, each of which drains the microtask queue
  for (let i = 0; i < 5; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

/** register -> acknowledge training -> pass the gate -> first formal video */
export async function qualifySubject(
  controller: SessionController,
  server: FakeStudyServer,
  subjectId = "tess",
) {
  await controller.start(subjectId, true);
  const ack = document.querySelector<HTMLButtonElement>("button.acknowledge");
  ack!.click();
  await flush();
  for (const vid of server.testVideos) {
    endVideo(controller);
    setSlider(controller, server.anchors.get(vid)!);
    submitForm(controller);
    await flush();
  }
  await flush();
}
