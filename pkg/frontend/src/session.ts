// Session flow: training -> testing gate -> formal rating loop.
//
// All state lives on the server; this controller only renders the current
// server-reported step, so a page reload resumes exactly where the subject
// left off. The rating form stays hidden until the video's `ended` event.

import { ApiError, StudyApi, TestVideoRef, VideoItem } from "./api.js";
import { VideoGate } from "./player.js";
import { createScoreSlider, ScoreSlider } from "./slider.js";

const BLOCK_MESSAGES: Record<string, string> = {
  fatigue_limit:
    "You have completed two batches this half-day. Please take a break " +
    "and come back later.",
  rejected: "Your participation in this study has ended.",
};

type Mode = "idle" | "training" | "testing" | "formal" | "done";

export class SessionController {
  readonly gate: VideoGate;
  readonly slider: ScoreSlider;

  private readonly doc: Document;
  private subjectId = "";
  private mode: Mode = "idle";
  private current: VideoItem | null = null;
  private testQueue: TestVideoRef[] = [];
  private testRatings: Array<{ video_id: string; raw_score: number }> = [];

  // screen elements
  private readonly heading: HTMLHeadingElement;
  private readonly message: HTMLParagraphElement;
  private readonly content: HTMLDivElement;
  private readonly videoWrap: HTMLDivElement;
  private readonly progress: HTMLDivElement;
  readonly ratingForm: HTMLFormElement;
  private readonly submitButton: HTMLButtonElement;
  private readonly playbackControls: HTMLDivElement;

  constructor(
    private api: StudyApi,
    private root: HTMLElement,
  ) {
    this.doc = root.ownerDocument;
    const d = this.doc;

    this.heading = d.createElement("h2");
    this.message = d.createElement("p");
    this.message.className = "message";
    this.content = d.createElement("div");
    this.content.className = "content";

    this.videoWrap = d.createElement("div");
    this.videoWrap.className = "video-wrap";
    this.videoWrap.hidden = true;
    this.gate = new VideoGate(d);
    this.videoWrap.append(this.gate.video);

    this.playbackControls = d.createElement("div");
    this.playbackControls.className = "playback-controls";
    const pauseButton = d.createElement("button");
    pauseButton.type = "button";
    pauseButton.textContent = "Pause";
    pauseButton.addEventListener("click", () => this.gate.pause());
    const replayButton = d.createElement("button");
    replayButton.type = "button";
    replayButton.className = "replay";
    replayButton.textContent = "Replay";
    replayButton.addEventListener("click", () => this.replay());
    this.playbackControls.append(pauseButton, replayButton);
    this.videoWrap.append(this.playbackControls);

    this.progress = d.createElement("div");
    this.progress.className = "progress";

    this.slider = createScoreSlider(d);
    this.ratingForm = d.createElement("form");
    this.ratingForm.className = "rating-form";
    this.ratingForm.hidden = true; // revealed only by the ended event
    this.submitButton = d.createElement("button");
    this.submitButton.type = "submit";
    this.submitButton.textContent = "Submit rating";
    this.ratingForm.append(this.slider.root, this.submitButton);
    this.ratingForm.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.handleSubmit();
    });

    this.gate.onEnded(() => this.revealForm());

    root.append(
      this.heading,
      this.message,
      this.progress,
      this.videoWrap,
      this.ratingForm,
      this.content,
    );
  }

  /** Entry point: also used after reload to resume at the server cursor. */
  async start(subjectId: string, register = false): Promise<void> {
    this.subjectId = subjectId;
    if (register) {
      try {
        await this.api.registerSubject(subjectId);
      } catch (error) {
        // an existing registration just means we resume
        if (!(error instanceof ApiError && error.status === 409)) throw error;
      }
    }
    await this.refresh();
  }

  /** Re-fetch the authoritative phase/cursor and render it. */
  async refresh(): Promise<void> {
    const view = await this.api.sessionView(this.subjectId);
    if (view.phase === "training") {
      await this.showTraining();
    } else if (view.phase === "testing") {
      this.startTesting(view.test_videos ?? []);
    } else if (view.phase === "formal") {
      this.mode = "formal";
      await this.advance();
    } else {
      this.showDone();
    }
  }

  private showDone(): void {
    this.mode = "done";
    this.hideVideo();
    this.heading.textContent = "Session finished";
    this.message.textContent =
      "There is nothing left to rate in this study. Thank you!";
    this.content.replaceChildren();
  }

  // -- training ----------------------------------------------------------

  private async showTraining(): Promise<void> {
    this.mode = "training";
    this.hideVideo();
    this.heading.textContent = "Training";
    this.message.textContent =
      "Read the rating criteria for each quality level, watch the example " +
      "videos, then continue.";
    this.content.replaceChildren();
    const items = await this.api.trainingMaterials();
    for (const item of items) {
      const card = this.doc.createElement("section");
      card.className = "training-card";
      const title = this.doc.createElement("h3");
      title.textContent = item.level;
      const text = this.doc.createElement("p");
      text.textContent = item.criteria;
      const clip = this.doc.createElement("video");
      clip.src = item.media_url;
      clip.controls = true;
      card.append(title, text, clip);
      this.content.append(card);
    }
    const ack = this.doc.createElement("button");
    ack.type = "button";
    ack.className = "acknowledge";
    ack.textContent = "I understand the criteria";
    ack.addEventListener("click", () => {
      void this.api
        .acknowledgeTraining(this.subjectId)
        .then(() => this.refresh());
    });
    this.content.append(ack);
  }

  // -- testing gate --------------------------------------------------------

  private startTesting(videos: TestVideoRef[]): void {
    this.mode = "testing";
    this.testQueue = [...videos];
    this.testRatings = [];
    this.heading.textContent = "Qualification test";
    this.message.textContent =
      "Rate each of the following videos. Your scores are checked against " +
      "reference ratings.";
    this.content.replaceChildren();
    this.playNextTestVideo();
  }

  private playNextTestVideo(): void {
    const next = this.testQueue[this.testRatings.length];
    if (!next) {
      void this.finishTesting();
      return;
    }
    this.progress.textContent = `Test video ${this.testRatings.length + 1} of ${
      this.testQueue.length
    }`;
    this.playItem(next.media_url);
  }

  private async finishTesting(): Promise<void> {
    this.hideVideo();
    const result = await this.api.submitTest(this.subjectId, this.testRatings);
    if (result.result === "qualified") {
      this.message.textContent = "You passed the qualification test.";
      await this.refresh();
      return;
    }
    if (result.detail.exhausted) {
      this.heading.textContent = "Test not passed";
      this.message.textContent =
        "The qualification test was not passed and no attempts remain. " +
        "Thank you for your time.";
      this.mode = "done";
      return;
    }
    this.heading.textContent = "Test not passed";
    this.message.textContent =
      `${result.detail.n_within} of ${this.testQueue.length} ratings were ` +
      `close enough (needed ${result.detail.threshold}). One retry remains.`;
    const retry = this.doc.createElement("button");
    retry.type = "button";
    retry.className = "retry";
    retry.textContent = "Retry the test";
    retry.addEventListener("click", () => this.startTesting(this.testQueue));
    this.content.replaceChildren(retry);
  }

  // -- formal rating loop ---------------------------------------------------

  private async advance(): Promise<void> {
    const next = await this.api.nextItem(this.subjectId);
    if (next.status === "item") {
      this.current = next;
      this.heading.textContent = "Rate this video";
      this.message.textContent = "";
      this.content.replaceChildren();
      this.progress.textContent = `Video ${next.progress.rated + 1} of ${
        next.progress.batch_size
      } in batch ${next.batch_id + 1}`;
      this.playItem(next.media_url);
      return;
    }
    this.current = null;
    this.hideVideo();
    if (next.status === "blocked") {
      this.heading.textContent =
        next.reason === "fatigue_limit" ? "Take a break" : "Session ended";
      this.message.textContent = BLOCK_MESSAGES[next.reason] ?? next.reason;
      this.content.replaceChildren();
      this.mode = "done";
      return;
    }
    this.heading.textContent = next.study_complete
      ? "All batches complete"
      : "Batch complete";
    this.message.textContent = "Thank you! Your ratings have been recorded.";
    this.content.replaceChildren();
    this.mode = "done";
  }

  // -- shared playback/rating ------------------------------------------------

  private playItem(mediaUrl: string): void {
    this.ratingForm.hidden = true;
    this.slider.reset();
    this.videoWrap.hidden = false;
    this.gate.load(mediaUrl);
  }

  private replay(): void {
    // replaying hides the form again until the video finishes once more
    if (!this.gate.playbackCompleted) {
      this.gate.replay();
      return;
    }
    this.gate.replay();
  }

  private revealForm(): void {
    if (this.mode === "testing" || this.mode === "formal") {
      this.ratingForm.hidden = false;
    }
  }

  private hideVideo(): void {
    this.videoWrap.hidden = true;
    this.ratingForm.hidden = true;
    this.progress.textContent = "";
  }

  private async handleSubmit(): Promise<void> {
    // hard gate: no request leaves this client before the ended event
    if (!this.gate.playbackCompleted || this.ratingForm.hidden) {
      return;
    }
    const score = this.slider.value();
    if (this.mode === "testing") {
      const ref = this.testQueue[this.testRatings.length];
      this.testRatings.push({ video_id: ref.video_id, raw_score: score });
      this.playNextTestVideo();
      return;
    }
    if (this.mode !== "formal" || !this.current) {
      return;
    }
    try {
      await this.api.submitRating({
        subject_id: this.subjectId,
        video_id: this.current.video_id,
        raw_score: score,
        replays: this.gate.replays,
        playback_completed: true,
      });
    } catch (error) {
      if (error instanceof ApiError) {
        // surface the server message and stay on the current video
        this.message.textContent = error.message;
        return;
      }
      throw error;
    }
    await this.advance();
  }
}
